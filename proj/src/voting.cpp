#include "gecvote/voting.hpp"

#include <algorithm>

#include "gecvote/parallel.hpp"

namespace gecvote {

std::vector<CountedEdit> count_edits(const std::vector<EditSet>& edit_sets,
                                     int k) {
  if (edit_sets.size() != static_cast<std::size_t>(k))
    throw MismatchError("expected " + std::to_string(k) + " edit sets, got " +
                        std::to_string(edit_sets.size()));
  std::size_t total = 0;
  for (const EditSet& set : edit_sets) {
    if (set.source_len != edit_sets.front().source_len)
      throw MismatchError("edit sets disagree on source length");
    total += set.edits.size();
  }

  std::vector<Edit> all;
  all.reserve(total);
  for (const EditSet& set : edit_sets)
    all.insert(all.end(), set.edits.begin(), set.edits.end());
  std::sort(all.begin(), all.end(), edit_less);

  std::vector<CountedEdit> counts;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    counts.push_back({all[i], static_cast<int>(j - i)});
    i = j;
  }
  return counts;
}

namespace {

// Insertions at the same offset collide; otherwise half-open span overlap.
bool edits_conflict(const Edit& a, const Edit& b) {
  if (a.start == a.end && b.start == b.end) return a.start == b.start;
  return a.start < b.end && b.start < a.end;
}

}  // namespace

VoteResult vote(const TokenSeq& source,
                const std::vector<TokenSeq>& candidates,
                const VoteConfig& config, MergeStrategy strategy) {
  if (config.k < 1 || config.tau < 1 || config.tau > config.k)
    throw ConfigError("need 1 <= tau <= k, got tau=" +
                      std::to_string(config.tau) +
                      " k=" + std::to_string(config.k));
  if (candidates.size() != static_cast<std::size_t>(config.k))
    throw MismatchError("expected " + std::to_string(config.k) +
                        " candidates, got " +
                        std::to_string(candidates.size()));

  std::vector<EditSet> edit_sets;
  edit_sets.reserve(candidates.size());
  for (const TokenSeq& candidate : candidates)
    edit_sets.push_back(extract_edits(source, candidate, strategy));

  VoteResult result;
  result.union_counts = count_edits(edit_sets, config.k);

  std::vector<CountedEdit> passing;
  for (const CountedEdit& ce : result.union_counts)
    if (ce.count >= config.tau) passing.push_back(ce);

  // Highest-consensus edit wins; remaining keys make the order total.
  std::stable_sort(passing.begin(), passing.end(),
                   [](const CountedEdit& a, const CountedEdit& b) {
                     if (a.count != b.count) return a.count > b.count;
                     if (a.edit.start != b.edit.start)
                       return a.edit.start < b.edit.start;
                     const std::size_t alen = a.edit.end - a.edit.start;
                     const std::size_t blen = b.edit.end - b.edit.start;
                     if (alen != blen) return alen < blen;
                     return a.edit.replacement < b.edit.replacement;
                   });

  std::vector<CountedEdit> kept;
  for (const CountedEdit& ce : passing) {
    bool conflicts = false;
    for (const CountedEdit& k : kept)
      if (edits_conflict(ce.edit, k.edit)) {
        conflicts = true;
        break;
      }
    if (conflicts)
      result.dropped_conflicts.push_back(ce);
    else
      kept.push_back(ce);
  }

  result.accepted.source_len = source.size();
  for (const CountedEdit& ce : kept) result.accepted.edits.push_back(ce.edit);
  std::sort(result.accepted.edits.begin(), result.accepted.edits.end(),
            edit_less);
  result.output = apply_edits(source, result.accepted);
  return result;
}

std::vector<VoteResult> vote_corpus(
    const std::vector<TokenSeq>& sources,
    const std::vector<std::vector<TokenSeq>>& candidate_lists,
    const VoteConfig& config, MergeStrategy strategy, unsigned threads) {
  if (sources.size() != candidate_lists.size())
    throw LengthMismatchError("corpus has " + std::to_string(sources.size()) +
                              " sources but " +
                              std::to_string(candidate_lists.size()) +
                              " candidate lists");
  std::vector<VoteResult> results(sources.size());
  parallel_for(sources.size(), threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t i = begin; i < end; ++i)
                   results[i] =
                       vote(sources[i], candidate_lists[i], config, strategy);
               });
  return results;
}

}  // namespace gecvote

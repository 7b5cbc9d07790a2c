#include "gecvote/mbr.hpp"

#include <algorithm>

#include "gecvote/metrics.hpp"
#include "gecvote/parallel.hpp"

namespace gecvote {

UtilityKind parse_utility(const std::string& name) {
  if (name == "edit-f05") return UtilityKind::EditF05;
  if (name == "sentence-gleu") return UtilityKind::SentenceGleu;
  throw ConfigError("unknown utility '" + name +
                    "' (expected edit-f05 or sentence-gleu)");
}

std::string utility_name(UtilityKind utility) {
  switch (utility) {
    case UtilityKind::EditF05: return "edit-f05";
    case UtilityKind::SentenceGleu: return "sentence-gleu";
  }
  throw ConfigError("invalid utility kind");
}

MbrResult mbr_select(const TokenSeq& source,
                     const std::vector<TokenSeq>& candidates,
                     UtilityKind utility, MergeStrategy strategy) {
  if (candidates.empty())
    throw EmptyCandidatesError("mbr_select needs at least one candidate");
  const std::size_t k = candidates.size();

  // Edit sets are shared between the hypothesis and pseudo-reference roles.
  std::vector<EditSet> edits;
  if (utility == UtilityKind::EditF05) {
    edits.reserve(k);
    for (const TokenSeq& candidate : candidates)
      edits.push_back(extract_edits(source, candidate, strategy));
  }

  MbrResult result;
  result.utilities.resize(k, 0.0);
  for (std::size_t h = 0; h < k; ++h) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (utility == UtilityKind::EditF05)
        sum += sentence_f05(source, candidates[h], edits[i], strategy);
      else
        sum += sentence_gleu(source, candidates[h], candidates[i]);
    }
    result.utilities[h] = sum / static_cast<double>(k);
  }

  result.selected_index = static_cast<std::size_t>(
      std::max_element(result.utilities.begin(), result.utilities.end()) -
      result.utilities.begin());
  result.selected = candidates[result.selected_index];
  return result;
}

std::vector<MbrResult> mbr_corpus(
    const std::vector<TokenSeq>& sources,
    const std::vector<std::vector<TokenSeq>>& candidate_lists,
    UtilityKind utility, MergeStrategy strategy, unsigned threads) {
  if (sources.size() != candidate_lists.size())
    throw LengthMismatchError(
        "corpus has " + std::to_string(sources.size()) +
        " sources but " + std::to_string(candidate_lists.size()) +
        " candidate lists");
  std::vector<MbrResult> results(sources.size());
  parallel_for(sources.size(), threads,
               [&](std::size_t begin, std::size_t end) {
                 for (std::size_t s = begin; s < end; ++s)
                   results[s] = mbr_select(sources[s], candidate_lists[s],
                                           utility, strategy);
               });
  return results;
}

}  // namespace gecvote

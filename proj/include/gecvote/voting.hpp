#pragma once

#include <vector>

#include "gecvote/align.hpp"
#include "gecvote/text.hpp"

namespace gecvote {

// A union edit together with the number of candidate edit sets containing
// it; count is in [1, k].
struct CountedEdit {
  Edit edit;
  int count = 0;
};

struct VoteConfig {
  int k = 8;    // candidates per source
  int tau = 1;  // minimum count for acceptance, 1 <= tau <= k
};

struct VoteResult {
  // The union of all candidate edits with counts, ordered by
  // (start, end, replacement).
  std::vector<CountedEdit> union_counts;
  // Edits with count >= tau that survived conflict resolution.
  EditSet accepted;
  // Edits with count >= tau dropped because they overlap a kept edit.
  std::vector<CountedEdit> dropped_conflicts;
  TokenSeq output;
};

// Tallies each distinct edit across the k sets (set membership per
// candidate). Throws MismatchError if the sets disagree on source length or
// their number differs from k.
std::vector<CountedEdit> count_edits(const std::vector<EditSet>& edit_sets,
                                     int k);

// Extracts edits from each candidate, keeps those appearing in at least tau
// candidates, and resolves overlaps among the kept edits: sort by
// (count desc, start asc, span length asc, replacement asc) and greedily
// keep edits that do not overlap an already-kept one. Two insertions at the
// same offset count as overlapping.
VoteResult vote(const TokenSeq& source,
                const std::vector<TokenSeq>& candidates,
                const VoteConfig& config,
                MergeStrategy strategy = MergeStrategy::MergeAdjacent);

// Per-sentence voting across a corpus; sentences are independent and run on
// `threads` threads (0 = hardware concurrency).
std::vector<VoteResult> vote_corpus(
    const std::vector<TokenSeq>& sources,
    const std::vector<std::vector<TokenSeq>>& candidate_lists,
    const VoteConfig& config,
    MergeStrategy strategy = MergeStrategy::MergeAdjacent,
    unsigned threads = 1);

}  // namespace gecvote

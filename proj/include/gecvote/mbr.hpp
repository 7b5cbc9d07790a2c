#pragma once

#include <string>
#include <vector>

#include "gecvote/align.hpp"
#include "gecvote/errors.hpp"
#include "gecvote/text.hpp"

namespace gecvote {

enum class UtilityKind {
  EditF05,       // F0.5 of the candidate's edits against the pseudo-reference's
  SentenceGleu,  // single-reference sentence GLEU with source penalty
};

// Accepts "edit-f05" or "sentence-gleu"; throws ConfigError otherwise.
UtilityKind parse_utility(const std::string& name);
std::string utility_name(UtilityKind utility);

struct MbrResult {
  std::size_t selected_index = 0;
  TokenSeq selected;
  // Mean utility of each candidate against all k candidates (itself
  // included). utilities[selected_index] is the maximum; ties go to the
  // smallest index.
  std::vector<double> utilities;
};

// Picks the candidate with the highest mean pairwise utility, every
// candidate doubling as a pseudo-reference. For EditF05 each candidate's
// edits are extracted against the source with the given merge strategy.
// Throws EmptyCandidatesError when candidates is empty.
MbrResult mbr_select(const TokenSeq& source,
                     const std::vector<TokenSeq>& candidates,
                     UtilityKind utility,
                     MergeStrategy strategy = MergeStrategy::MergeAdjacent);

// Per-sentence mbr_select over a corpus. candidate_lists[i] belongs to
// sources[i]; sizes must match (LengthMismatchError).
std::vector<MbrResult> mbr_corpus(
    const std::vector<TokenSeq>& sources,
    const std::vector<std::vector<TokenSeq>>& candidate_lists,
    UtilityKind utility,
    MergeStrategy strategy = MergeStrategy::MergeAdjacent,
    unsigned threads = 1);

}  // namespace gecvote

#pragma once

#include <string>
#include <vector>

#include "gecvote/text.hpp"

namespace gecvote {

enum class OpKind { Match, Substitute, Insert, Delete };

// One cell of a token alignment. Match/Substitute cover one token on each
// side, Insert has an empty source span, Delete an empty hypothesis span.
// Concatenated source spans tile [0, |S|) and hypothesis spans tile
// [0, |H|).
struct AlignmentOp {
  OpKind kind = OpKind::Match;
  std::size_t src_begin = 0;
  std::size_t src_end = 0;
  std::size_t hyp_begin = 0;
  std::size_t hyp_end = 0;
};

// How non-match alignment regions are grouped into edits:
//   merge-adjacent  fuse maximal runs of non-match ops (default)
//   all-split       one edit per non-match op, fusing only adjacent
//                   insertions at one point
//   all-merge       additionally fuse runs separated by a single match
enum class MergeStrategy { MergeAdjacent, AllSplit, AllMerge };

MergeStrategy parse_strategy(const std::string& name);
const char* strategy_name(MergeStrategy strategy);

// Minimum-cost alignment under match=0, insert=1, delete=1, substitute=1.
// Ties break deterministically by preferring match > substitute > delete >
// insert during backtrace.
std::vector<AlignmentOp> align(const TokenSeq& source,
                               const TokenSeq& hypothesis);

int alignment_cost(const std::vector<AlignmentOp>& ops);

// Converts the alignment into an EditSet per the strategy. For every
// strategy, apply_edits(source, result) == hypothesis.
EditSet extract_edits(const TokenSeq& source, const TokenSeq& hypothesis,
                      MergeStrategy strategy = MergeStrategy::MergeAdjacent);

}  // namespace gecvote

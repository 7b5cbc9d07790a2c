#include "gecvote/align.hpp"

#include <algorithm>

namespace gecvote {

MergeStrategy parse_strategy(const std::string& name) {
  if (name == "merge-adjacent") return MergeStrategy::MergeAdjacent;
  if (name == "all-split") return MergeStrategy::AllSplit;
  if (name == "all-merge") return MergeStrategy::AllMerge;
  throw ConfigError("unknown merge strategy: " + name);
}

const char* strategy_name(MergeStrategy strategy) {
  switch (strategy) {
    case MergeStrategy::MergeAdjacent:
      return "merge-adjacent";
    case MergeStrategy::AllSplit:
      return "all-split";
    case MergeStrategy::AllMerge:
      return "all-merge";
  }
  return "merge-adjacent";
}

std::vector<AlignmentOp> align(const TokenSeq& source,
                               const TokenSeq& hypothesis) {
  const std::size_t n = source.size();
  const std::size_t m = hypothesis.size();
  std::vector<AlignmentOp> ops;

  if (source == hypothesis) {
    ops.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      ops.push_back({OpKind::Match, i, i + 1, i, i + 1});
    return ops;
  }

  // dist[i*(m+1)+j] = cost of aligning source[0,i) with hypothesis[0,j).
  std::vector<int> dist((n + 1) * (m + 1));
  const std::size_t stride = m + 1;
  for (std::size_t j = 0; j <= m; ++j) dist[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    dist[i * stride] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = dist[(i - 1) * stride + (j - 1)] +
                       (source[i - 1] == hypothesis[j - 1] ? 0 : 1);
      const int del = dist[(i - 1) * stride + j] + 1;
      const int ins = dist[i * stride + (j - 1)] + 1;
      dist[i * stride + j] = std::min({diag, del, ins});
    }
  }

  // Backtrace; preference at equal cost: match > substitute > delete >
  // insert.
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const int here = dist[i * stride + j];
    if (i > 0 && j > 0 && source[i - 1] == hypothesis[j - 1] &&
        here == dist[(i - 1) * stride + (j - 1)]) {
      ops.push_back({OpKind::Match, i - 1, i, j - 1, j});
      --i, --j;
    } else if (i > 0 && j > 0 && source[i - 1] != hypothesis[j - 1] &&
               here == dist[(i - 1) * stride + (j - 1)] + 1) {
      ops.push_back({OpKind::Substitute, i - 1, i, j - 1, j});
      --i, --j;
    } else if (i > 0 && here == dist[(i - 1) * stride + j] + 1) {
      ops.push_back({OpKind::Delete, i - 1, i, j, j});
      --i;
    } else {
      ops.push_back({OpKind::Insert, i, i, j - 1, j});
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

int alignment_cost(const std::vector<AlignmentOp>& ops) {
  int cost = 0;
  for (const AlignmentOp& op : ops)
    if (op.kind != OpKind::Match) ++cost;
  return cost;
}

namespace {

Edit make_edit(const std::vector<AlignmentOp>& ops, std::size_t first,
               std::size_t last, const TokenSeq& hypothesis) {
  Edit edit;
  edit.start = ops[first].src_begin;
  edit.end = ops[last].src_end;
  for (std::size_t h = ops[first].hyp_begin; h < ops[last].hyp_end; ++h)
    edit.replacement.push_back(hypothesis[h]);
  return edit;
}

}  // namespace

EditSet extract_edits(const TokenSeq& source, const TokenSeq& hypothesis,
                      MergeStrategy strategy) {
  const std::vector<AlignmentOp> ops = align(source, hypothesis);
  EditSet out;
  out.source_len = source.size();

  // Segments of op indices [first, last] that become one edit each.
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t idx = 0;
  while (idx < ops.size()) {
    if (ops[idx].kind == OpKind::Match) {
      ++idx;
      continue;
    }
    std::size_t run_end = idx;
    while (run_end + 1 < ops.size() && ops[run_end + 1].kind != OpKind::Match)
      ++run_end;
    if (strategy == MergeStrategy::AllSplit) {
      // One edit per op, except consecutive insertions which would form two
      // insertions at the same offset.
      std::size_t s = idx;
      while (s <= run_end) {
        std::size_t e = s;
        while (e + 1 <= run_end && ops[s].kind == OpKind::Insert &&
               ops[e + 1].kind == OpKind::Insert)
          ++e;
        segments.emplace_back(s, e);
        s = e + 1;
      }
    } else {
      segments.emplace_back(idx, run_end);
    }
    idx = run_end + 1;
  }

  if (strategy == MergeStrategy::AllMerge) {
    // Fuse runs separated by a single match (the match tokens pass through
    // inside the merged edit).
    std::vector<std::pair<std::size_t, std::size_t>> fused;
    for (const auto& seg : segments) {
      if (!fused.empty() && seg.first - fused.back().second <= 2)
        fused.back().second = seg.second;
      else
        fused.push_back(seg);
    }
    segments = std::move(fused);
  }

  for (const auto& [first, last] : segments)
    out.edits.push_back(make_edit(ops, first, last, hypothesis));
  return out;
}

}  // namespace gecvote

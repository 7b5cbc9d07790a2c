#include "gecvote/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "gecvote/parallel.hpp"
#include "gecvote/voting.hpp"

namespace gecvote {

double precision_of(const ScoreCounts& c) {
  return c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 1.0;
}

double recall_of(const ScoreCounts& c) {
  return c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 1.0;
}

double f_beta(const ScoreCounts& c, double beta) {
  const double p = precision_of(c);
  const double r = recall_of(c);
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * p * r / denom;
}

namespace {

// tp/fp/fn between two (start,end) sorted edit lists, matching on
// (span, replacement).
ScoreCounts match_counts(const std::vector<Edit>& hyp,
                         const std::vector<Edit>& ref) {
  ScoreCounts c;
  std::size_t i = 0, j = 0;
  while (i < hyp.size() && j < ref.size()) {
    if (hyp[i] == ref[j]) {
      ++c.tp;
      ++i, ++j;
    } else if (edit_less(hyp[i], ref[j])) {
      ++i;
    } else {
      ++j;
    }
  }
  c.fp = static_cast<long long>(hyp.size()) - c.tp;
  c.fn = static_cast<long long>(ref.size()) - c.tp;
  return c;
}

// Tie-break chain shared by the annotator selectors: higher tp, lower fp,
// lower fn, lower annotator id.
bool better_counts(const ScoreCounts& a, unsigned a_id, const ScoreCounts& b,
                   unsigned b_id) {
  if (a.tp != b.tp) return a.tp > b.tp;
  if (a.fp != b.fp) return a.fp < b.fp;
  if (a.fn != b.fn) return a.fn < b.fn;
  return a_id < b_id;
}

std::vector<Edit> sorted_by_key(std::vector<Edit> edits) {
  std::sort(edits.begin(), edits.end(), edit_less);
  return edits;
}

}  // namespace

ScoreReport score_f05(const std::vector<AnnotationSet>& refs,
                      const std::vector<TokenSeq>& hypotheses,
                      MergeStrategy strategy, unsigned threads) {
  if (refs.size() != hypotheses.size())
    throw LengthMismatchError(
        "reference corpus has " + std::to_string(refs.size()) +
        " sentences, hypotheses " + std::to_string(hypotheses.size()));

  // Per-sentence candidate counts for every annotator, extraction in
  // parallel; selection below depends on running totals and is sequential.
  std::vector<std::vector<std::pair<unsigned, ScoreCounts>>> per_sentence(
      refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      const EditSet hyp_edits =
          extract_edits(refs[s].source, hypotheses[s], strategy);
      auto& row = per_sentence[s];
      if (refs[s].annotations.empty()) {
        // No annotator listed: score against an empty reference.
        row.emplace_back(0u, match_counts(hyp_edits.edits, {}));
        continue;
      }
      for (const auto& [annotator, ref_set] : refs[s].annotations)
        row.emplace_back(annotator,
                         match_counts(hyp_edits.edits, ref_set.edits));
    }
  });

  ScoreReport report;
  for (std::size_t s = 0; s < per_sentence.size(); ++s) {
    const auto& row = per_sentence[s];
    std::size_t best = 0;
    double best_f = -1.0;
    ScoreCounts best_cum;
    for (std::size_t a = 0; a < row.size(); ++a) {
      ScoreCounts cum = report.counts;
      cum += row[a].second;
      const double f = f_beta(cum);
      if (f > best_f ||
          (f == best_f &&
           better_counts(cum, row[a].first, best_cum, row[best].first))) {
        best = a;
        best_f = f;
        best_cum = cum;
      }
    }
    report.counts = best_cum;
    report.per_sentence.push_back({s, row[best].first, row[best].second});
  }
  report.precision = precision_of(report.counts);
  report.recall = recall_of(report.counts);
  report.f05 = f_beta(report.counts);
  return report;
}

double sentence_f05(const TokenSeq& source, const TokenSeq& hypothesis,
                    const EditSet& reference_edits, MergeStrategy strategy) {
  const EditSet hyp_edits = extract_edits(source, hypothesis, strategy);
  return f_beta(match_counts(hyp_edits.edits,
                             sorted_by_key(reference_edits.edits)));
}

// ---------------------------------------------------------------------------
// GLEU

namespace {

using NgramCounts = std::unordered_map<std::string, int>;

// n-grams keyed as separator-joined tokens; tokens never contain
// whitespace so '\x1f' cannot collide.
NgramCounts ngram_counts(const TokenSeq& tokens, int n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

// Per-(sentence, reference) numerators for each order: clipped hyp/ref
// matches minus the part of hyp∩source the reference does not license,
// floored at zero.
struct PairStats {
  std::vector<long long> numerator;  // size max_n
  std::size_t ref_len = 0;
};

PairStats pair_stats(const std::vector<NgramCounts>& hyp_by_n,
                     const std::vector<NgramCounts>& src_by_n,
                     const TokenSeq& ref, int max_n) {
  PairStats stats;
  stats.ref_len = ref.size();
  stats.numerator.resize(max_n, 0);
  for (int n = 1; n <= max_n; ++n) {
    const NgramCounts ref_counts = ngram_counts(ref, n);
    const NgramCounts& hyp_counts = hyp_by_n[n - 1];
    const NgramCounts& src_counts = src_by_n[n - 1];
    long long matched = 0;
    for (const auto& [gram, hcount] : hyp_counts) {
      const auto r = ref_counts.find(gram);
      if (r != ref_counts.end()) matched += std::min(hcount, r->second);
    }
    long long penalty = 0;
    for (const auto& [gram, hcount] : hyp_counts) {
      const auto s = src_counts.find(gram);
      if (s == src_counts.end()) continue;
      const auto r = ref_counts.find(gram);
      const int unsupported =
          s->second - (r == ref_counts.end() ? 0 : r->second);
      if (unsupported > 0) penalty += std::min(hcount, unsupported);
    }
    stats.numerator[n - 1] = std::max(0LL, matched - penalty);
  }
  return stats;
}

double iteration_score(const std::vector<long long>& numerators,
                       const std::vector<long long>& denominators,
                       long long hyp_len, long long ref_len, int max_n) {
  if (hyp_len == 0) return ref_len == 0 ? 1.0 : 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    if (denominators[n - 1] == 0) continue;  // order excluded
    if (numerators[n - 1] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(numerators[n - 1]) /
                        static_cast<double>(denominators[n - 1])) /
               max_n;
  }
  const double bp =
      hyp_len > ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return bp * std::exp(log_sum);
}

}  // namespace

GleuReport gleu(const std::vector<TokenSeq>& sources,
                const std::vector<TokenSeq>& hypotheses,
                const std::vector<std::vector<TokenSeq>>& references,
                const GleuConfig& config) {
  if (sources.size() != hypotheses.size() ||
      sources.size() != references.size())
    throw LengthMismatchError("sources/hypotheses/references sizes differ");
  if (config.max_n < 1 || config.iterations < 1)
    throw ConfigError("GLEU needs max_n >= 1 and iterations >= 1");
  for (std::size_t s = 0; s < references.size(); ++s)
    if (references[s].empty())
      throw EmptyReferenceError("sentence " + std::to_string(s) +
                                " has no reference");

  const int max_n = config.max_n;
  const std::size_t count = sources.size();

  // Hypothesis-side denominators and lengths never change across
  // iterations.
  std::vector<long long> denominators(max_n, 0);
  long long hyp_len = 0;
  std::vector<std::vector<NgramCounts>> hyp_by_n(count), src_by_n(count);
  for (std::size_t s = 0; s < count; ++s) {
    hyp_len += static_cast<long long>(hypotheses[s].size());
    for (int n = 1; n <= max_n; ++n) {
      hyp_by_n[s].push_back(ngram_counts(hypotheses[s], n));
      src_by_n[s].push_back(ngram_counts(sources[s], n));
      denominators[n - 1] += std::max<long long>(
          0, static_cast<long long>(hypotheses[s].size()) + 1 - n);
    }
  }

  // (sentence, reference) stats are computed on first use; with few
  // references per sentence most iterations hit the cache.
  std::vector<std::vector<PairStats>> cache(count);
  std::vector<std::vector<bool>> cached(count);
  for (std::size_t s = 0; s < count; ++s) {
    cache[s].resize(references[s].size());
    cached[s].assign(references[s].size(), false);
  }

  GleuReport report;
  report.seed = config.seed;
  for (int it = 0; it < config.iterations; ++it) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed & 0xFFFFFFFFu),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(it)};
    std::mt19937_64 rng(seq);

    std::vector<long long> numerators(max_n, 0);
    long long ref_len = 0;
    for (std::size_t s = 0; s < count; ++s) {
      // One draw per sentence per iteration, even with a single reference,
      // so the consumption sequence is a function of the corpus shape only.
      const std::size_t pick = rng() % references[s].size();
      if (!cached[s][pick]) {
        cache[s][pick] =
            pair_stats(hyp_by_n[s], src_by_n[s], references[s][pick], max_n);
        cached[s][pick] = true;
      }
      const PairStats& stats = cache[s][pick];
      ref_len += static_cast<long long>(stats.ref_len);
      for (int n = 1; n <= max_n; ++n)
        numerators[n - 1] += stats.numerator[n - 1];
    }
    report.per_iteration.push_back(
        iteration_score(numerators, denominators, hyp_len, ref_len, max_n));
  }

  double sum = 0.0;
  for (double v : report.per_iteration) sum += v;
  report.score = sum / static_cast<double>(report.per_iteration.size());
  return report;
}

double sentence_gleu(const TokenSeq& source, const TokenSeq& hypothesis,
                     const TokenSeq& reference, int max_n) {
  GleuConfig config;
  config.max_n = max_n;
  config.iterations = 1;
  return gleu({source}, {hypothesis}, {{reference}}, config).score;
}

FrequencyPrecisionReport frequency_precision(
    const std::vector<AnnotationSet>& refs,
    const std::vector<std::vector<TokenSeq>>& candidate_lists, int k,
    MergeStrategy strategy, unsigned threads) {
  if (refs.size() != candidate_lists.size())
    throw LengthMismatchError(
        "reference corpus has " + std::to_string(refs.size()) +
        " sentences, candidate lists " +
        std::to_string(candidate_lists.size()));

  FrequencyPrecisionReport report;
  report.k = k;
  for (int f = 1; f <= k; ++f) report.per_frequency[f] = {};

  // Union counts per sentence, in parallel.
  std::vector<std::vector<CountedEdit>> counted(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      if (candidate_lists[s].size() != static_cast<std::size_t>(k))
        throw MismatchError("sentence " + std::to_string(s) + " has " +
                            std::to_string(candidate_lists[s].size()) +
                            " candidates, expected " + std::to_string(k));
      std::vector<EditSet> sets;
      sets.reserve(candidate_lists[s].size());
      for (const TokenSeq& candidate : candidate_lists[s])
        sets.push_back(extract_edits(refs[s].source, candidate, strategy));
      counted[s] = count_edits(sets, k);
    }
  });

  for (std::size_t s = 0; s < refs.size(); ++s) {
    for (int f = 1; f <= k; ++f) {
      std::vector<Edit> bucket;
      for (const CountedEdit& ce : counted[s])
        if (ce.count == f) bucket.push_back(ce.edit);
      if (bucket.empty()) continue;
      // Locally best annotator for this bucket.
      bool have = false;
      ScoreCounts best;
      unsigned best_id = 0;
      double best_f = -1.0;
      if (refs[s].annotations.empty()) {
        best = match_counts(bucket, {});
        have = true;
      }
      for (const auto& [annotator, ref_set] : refs[s].annotations) {
        const ScoreCounts c = match_counts(bucket, ref_set.edits);
        const double f05 = f_beta(c);
        if (!have || f05 > best_f ||
            (f05 == best_f && better_counts(c, annotator, best, best_id))) {
          best = c;
          best_id = annotator;
          best_f = f05;
          have = true;
        }
      }
      FrequencyBucket& out = report.per_frequency[f];
      out.edits_evaluated += static_cast<long long>(bucket.size());
      out.tp += best.tp;
      out.fp += best.fp;
    }
  }
  for (auto& [f, bucket] : report.per_frequency)
    bucket.precision = bucket.tp + bucket.fp > 0
                           ? static_cast<double>(bucket.tp) /
                                 (bucket.tp + bucket.fp)
                           : 1.0;
  return report;
}

}  // namespace gecvote

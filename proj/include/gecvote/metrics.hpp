#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "gecvote/align.hpp"
#include "gecvote/text.hpp"

namespace gecvote {

struct ScoreCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;

  ScoreCounts& operator+=(const ScoreCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

// M2-scorer conventions: precision/recall are 1.0 on an empty denominator;
// F is 0.0 when beta^2*P + R == 0.
double precision_of(const ScoreCounts& c);
double recall_of(const ScoreCounts& c);
double f_beta(const ScoreCounts& c, double beta = 0.5);

struct SentenceScore {
  std::size_t index = 0;
  unsigned annotator = 0;
  ScoreCounts counts;
};

struct ScoreReport {
  ScoreCounts counts;
  double precision = 1.0;
  double recall = 1.0;
  double f05 = 0.0;
  std::vector<SentenceScore> per_sentence;
};

// Edit-level corpus F0.5 against multi-annotator references. Per sentence
// the hypothesis edit set is matched exactly (span + replacement) against
// each annotator; the annotator maximizing the running corpus F0.5 is
// chosen, ties broken by (higher tp, lower fp, lower fn, lower id).
// `threads` parallelizes the per-sentence extraction only; accumulation
// stays sequential.
ScoreReport score_f05(const std::vector<AnnotationSet>& refs,
                      const std::vector<TokenSeq>& hypotheses,
                      MergeStrategy strategy = MergeStrategy::MergeAdjacent,
                      unsigned threads = 1);

// Single-sentence F0.5 under the same conventions; two empty edit sets
// score 1.0.
double sentence_f05(const TokenSeq& source, const TokenSeq& hypothesis,
                    const EditSet& reference_edits,
                    MergeStrategy strategy = MergeStrategy::MergeAdjacent);

struct GleuConfig {
  int max_n = 4;
  int iterations = 500;
  std::uint64_t seed = 1234;
};

struct GleuReport {
  double score = 0.0;
  std::vector<double> per_iteration;
  std::uint64_t seed = 0;
};

// Sampling GLEU: each iteration draws one reference per sentence from a
// deterministic RNG keyed on (seed, iteration) and computes corpus n-gram
// precisions with the source penalty, a BLEU-style brevity penalty, and a
// geometric mean that skips orders with an empty denominator. The final
// score is the mean over iterations.
GleuReport gleu(const std::vector<TokenSeq>& sources,
                const std::vector<TokenSeq>& hypotheses,
                const std::vector<std::vector<TokenSeq>>& references,
                const GleuConfig& config = {});

// Single-sentence, single-reference GLEU with the same contract.
double sentence_gleu(const TokenSeq& source, const TokenSeq& hypothesis,
                     const TokenSeq& reference, int max_n = 4);

struct FrequencyBucket {
  long long edits_evaluated = 0;
  long long tp = 0;
  long long fp = 0;
  double precision = 1.0;
};

struct FrequencyPrecisionReport {
  int k = 0;
  std::map<int, FrequencyBucket> per_frequency;  // frequency in [1, k]
};

// Buckets the union edits of k candidates by how many candidates contain
// them and scores each bucket against the locally best annotator. Recall is
// not reported; bucket membership counts bias it.
FrequencyPrecisionReport frequency_precision(
    const std::vector<AnnotationSet>& refs,
    const std::vector<std::vector<TokenSeq>>& candidate_lists, int k,
    MergeStrategy strategy = MergeStrategy::MergeAdjacent,
    unsigned threads = 1);

}  // namespace gecvote

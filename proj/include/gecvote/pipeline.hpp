#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gecvote/align.hpp"
#include "gecvote/generation.hpp"
#include "gecvote/mbr.hpp"
#include "gecvote/metrics.hpp"
#include "gecvote/text.hpp"

namespace gecvote {

enum class MetricKind { ErrantF05, Gleu };

// Accepts "errant-f05" or "gleu"; throws ConfigError otherwise.
MetricKind parse_metric(const std::string& name);
std::string metric_name(MetricKind metric);

enum class DecodingKind { Vote, Mbr, Greedy };

// Accepts "vote", "mbr", or "greedy"; throws ConfigError otherwise.
DecodingKind parse_decoding(const std::string& name);
std::string decoding_name(DecodingKind decoding);

// --- corpus file formats -------------------------------------------------

// Plain text, one tokenized sentence per line (UTF-8).
std::vector<TokenSeq> read_corpus(const std::string& path);
void write_corpus(const std::string& path,
                  const std::vector<TokenSeq>& sentences);

// Candidates JSONL: {"idx": int, "source": str, "candidates": [str, ...]}
// per line, idx contiguous from 0. Tokens round-trip through the joined
// strings because they never contain whitespace.
struct CandidateCorpus {
  std::vector<TokenSeq> sources;
  std::vector<std::vector<TokenSeq>> candidates;
};

CandidateCorpus read_candidates_jsonl(const std::string& path);
void write_candidates_jsonl(const std::string& path,
                            const std::vector<TokenSeq>& sources,
                            const std::vector<std::vector<TokenSeq>>& lists);

// Few-shot pairs: "source<TAB>corrected" per line.
std::vector<std::pair<std::string, std::string>> read_pairs_tsv(
    const std::string& path);

// A built-in template id, or a path to a file whose content is the body
// (one trailing newline stripped); the file's basename becomes the id.
PromptTemplate load_template(const std::string& id_or_path);

// Manifest JSON on disk, used for replay and idempotence checks.
void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

// References for GLEU: each annotator's edits applied to the source; a
// sentence without annotators contributes its source as the only reference.
std::vector<std::vector<TokenSeq>> references_from_annotations(
    const std::vector<AnnotationSet>& refs);

// --- report serialization -------------------------------------------------

std::string errant_report_json(const ScoreReport& report);
std::string gleu_report_json(const GleuReport& report);
std::string frequency_report_json(const FrequencyPrecisionReport& report);

// --- analysis harnesses ---------------------------------------------------

struct TauScore {
  double score = 0.0;
  // Present for the errant-f05 metric only.
  std::optional<double> precision;
  std::optional<double> recall;
};

struct SweepResult {
  MetricKind metric = MetricKind::ErrantF05;
  std::map<int, TauScore> per_tau;  // every tau in [1, k]
  int best_tau = 1;                 // max score; ties go to the larger tau
};

// Votes at every tau in [1, k] and scores the outputs against refs.
SweepResult sweep_tau(const std::vector<AnnotationSet>& refs,
                      const std::vector<std::vector<TokenSeq>>& candidate_lists,
                      int k, MetricKind metric,
                      MergeStrategy strategy = MergeStrategy::MergeAdjacent,
                      unsigned threads = 1, const GleuConfig& gleu_config = {});

std::string sweep_report_json(const SweepResult& result);

struct BenchRecord {
  int k = 0;
  int best_tau = 1;
  double score = 0.0;
  double mean_seconds_per_sentence = 0.0;
  std::string mode;  // "stored": timing covers voting + scoring only
};

// For each k in k_list (stored candidates must be at least that wide,
// InsufficientCandidatesError otherwise): sweeps tau over the first k
// candidates per sentence, then times one vote + score pass at the best tau.
std::vector<BenchRecord> bench_k(
    const std::vector<AnnotationSet>& refs,
    const std::vector<std::vector<TokenSeq>>& candidate_lists,
    const std::vector<int>& k_list, MetricKind metric,
    MergeStrategy strategy = MergeStrategy::MergeAdjacent,
    unsigned threads = 1, const GleuConfig& gleu_config = {});

std::string bench_report_json(const std::vector<BenchRecord>& records);

struct TemplateScore {
  std::string id;
  double score = 0.0;
};

struct TemplateSweepResult {
  std::vector<TemplateScore> per_template;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
};

// Runs generate -> vote -> score once per template (needs at least two,
// ConfigError otherwise) with config.n candidates and the given tau.
// Endpoint failures propagate as EndpointError.
TemplateSweepResult template_sweep(const std::vector<PromptTemplate>& templates,
                                   const FewShotSet& fewshot,
                                   const std::vector<AnnotationSet>& refs,
                                   const GenConfig& config, int tau,
                                   MetricKind metric,
                                   MergeStrategy strategy =
                                       MergeStrategy::MergeAdjacent,
                                   unsigned threads = 1,
                                   const GleuConfig& gleu_config = {});

std::string template_sweep_report_json(const TemplateSweepResult& result);

// --- end-to-end pipeline ---------------------------------------------------

// Executes the run described by the JSON config file and writes artifacts
// (candidates.jsonl, corrected.txt, accepted.m2, report.json, manifest.json)
// into its output directory. Returns the process exit code: 0 on success,
// 2 when a configured candidates file is missing, 1 on any other failure;
// nonzero exits write one machine-readable JSON error record to
// `diagnostics`. See the README for the config schema.
int run_pipeline(const std::string& config_path, std::ostream& diagnostics);

}  // namespace gecvote

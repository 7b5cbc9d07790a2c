#include "gecvote/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "gecvote/m2.hpp"
#include "gecvote/parallel.hpp"
#include "gecvote/voting.hpp"

namespace gecvote {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

MetricKind parse_metric(const std::string& name) {
  if (name == "errant-f05") return MetricKind::ErrantF05;
  if (name == "gleu") return MetricKind::Gleu;
  throw ConfigError("unknown metric '" + name +
                    "' (expected errant-f05 or gleu)");
}

std::string metric_name(MetricKind metric) {
  switch (metric) {
    case MetricKind::ErrantF05: return "errant-f05";
    case MetricKind::Gleu: return "gleu";
  }
  throw ConfigError("invalid metric kind");
}

DecodingKind parse_decoding(const std::string& name) {
  if (name == "vote") return DecodingKind::Vote;
  if (name == "mbr") return DecodingKind::Mbr;
  if (name == "greedy") return DecodingKind::Greedy;
  throw ConfigError("unknown decoding '" + name +
                    "' (expected vote, mbr, or greedy)");
}

std::string decoding_name(DecodingKind decoding) {
  switch (decoding) {
    case DecodingKind::Vote: return "vote";
    case DecodingKind::Mbr: return "mbr";
    case DecodingKind::Greedy: return "greedy";
  }
  throw ConfigError("invalid decoding kind");
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  out.flush();
  if (!out.good()) throw IoError("cannot write " + path);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

}  // namespace

std::vector<TokenSeq> read_corpus(const std::string& path) {
  std::vector<TokenSeq> sentences;
  for (const std::string& line : split_lines(read_file(path)))
    sentences.push_back(tokenize(line));
  return sentences;
}

void write_corpus(const std::string& path,
                  const std::vector<TokenSeq>& sentences) {
  std::string out;
  for (const TokenSeq& sentence : sentences) {
    out += join_tokens(sentence);
    out += '\n';
  }
  write_file(path, out);
}

CandidateCorpus read_candidates_jsonl(const std::string& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<std::pair<TokenSeq, std::vector<TokenSeq>>> by_idx(lines.size());
  std::vector<bool> seen(lines.size(), false);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty())
      throw FormatError(line_no, "blank line in candidates JSONL");
    json entry;
    try {
      entry = json::parse(lines[i]);
    } catch (const std::exception& e) {
      throw FormatError(line_no, e.what());
    }
    if (!entry.is_object() || !entry.contains("idx") ||
        !entry.contains("source") || !entry.contains("candidates"))
      throw FormatError(line_no, "expected {idx, source, candidates}");
    const auto idx = entry["idx"].get<long long>();
    if (idx < 0 || idx >= static_cast<long long>(lines.size()) ||
        seen[static_cast<std::size_t>(idx)])
      throw FormatError(line_no, "idx values must be 0.." +
                                     std::to_string(lines.size() - 1) +
                                     " without repeats");
    seen[static_cast<std::size_t>(idx)] = true;
    auto& slot = by_idx[static_cast<std::size_t>(idx)];
    slot.first = tokenize(entry["source"].get<std::string>());
    for (const auto& candidate : entry["candidates"])
      slot.second.push_back(tokenize(candidate.get<std::string>()));
  }
  CandidateCorpus corpus;
  for (auto& [source, candidates] : by_idx) {
    corpus.sources.push_back(std::move(source));
    corpus.candidates.push_back(std::move(candidates));
  }
  return corpus;
}

void write_candidates_jsonl(const std::string& path,
                            const std::vector<TokenSeq>& sources,
                            const std::vector<std::vector<TokenSeq>>& lists) {
  if (sources.size() != lists.size())
    throw LengthMismatchError("candidate lists and sources differ in size");
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    json entry;
    entry["idx"] = i;
    entry["source"] = join_tokens(sources[i]);
    json candidates = json::array();
    for (const TokenSeq& candidate : lists[i])
      candidates.push_back(join_tokens(candidate));
    entry["candidates"] = std::move(candidates);
    out += entry.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<std::pair<std::string, std::string>> read_pairs_tsv(
    const std::string& path) {
  std::vector<std::pair<std::string, std::string>> pairs;
  const std::vector<std::string> lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw FormatError(i + 1, "expected source<TAB>corrected");
    pairs.emplace_back(lines[i].substr(0, tab), lines[i].substr(tab + 1));
  }
  return pairs;
}

PromptTemplate load_template(const std::string& id_or_path) {
  for (const PromptTemplate& t : builtin_templates())
    if (t.id == id_or_path) return t;
  if (!fs::exists(id_or_path))
    throw ConfigError("template '" + id_or_path +
                      "' is neither a built-in id nor an existing file");
  std::string body = read_file(id_or_path);
  if (!body.empty() && body.back() == '\n') body.pop_back();
  return make_template(fs::path(id_or_path).stem().string(), body);
}

namespace {

json manifest_to_json(const RunManifest& m) {
  json j;
  j["endpoint"] = m.endpoint;
  j["model"] = m.model;
  j["template_id"] = m.template_id;
  j["template_body"] = m.template_body;
  json fewshot = json::array();
  for (const auto& [src, ref] : m.fewshot)
    fewshot.push_back(json::array({src, ref}));
  j["fewshot"] = std::move(fewshot);
  j["language"] = m.language ? json(*m.language) : json(nullptr);
  j["n"] = m.n;
  j["temperature"] = m.temperature;
  j["top_p"] = m.top_p;
  j["max_tokens"] = m.max_tokens;
  j["timestamp"] = m.timestamp;
  j["complete"] = m.complete;
  j["failed_index"] =
      m.failed_index ? json(*m.failed_index) : json(nullptr);
  j["error"] = m.error;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.endpoint = j.at("endpoint").get<std::string>();
  m.model = j.at("model").get<std::string>();
  m.template_id = j.at("template_id").get<std::string>();
  m.template_body = j.at("template_body").get<std::string>();
  for (const auto& pair : j.at("fewshot"))
    m.fewshot.emplace_back(pair.at(0).get<std::string>(),
                           pair.at(1).get<std::string>());
  if (!j.at("language").is_null())
    m.language = j.at("language").get<std::string>();
  m.n = j.at("n").get<int>();
  m.temperature = j.at("temperature").get<double>();
  m.top_p = j.at("top_p").get<double>();
  m.max_tokens = j.at("max_tokens").get<int>();
  m.timestamp = j.at("timestamp").get<std::string>();
  m.complete = j.at("complete").get<bool>();
  if (!j.at("failed_index").is_null())
    m.failed_index = j.at("failed_index").get<std::size_t>();
  m.error = j.at("error").get<std::string>();
  return m;
}

}  // namespace

void write_manifest(const std::string& path, const RunManifest& manifest) {
  write_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
  try {
    return manifest_from_json(json::parse(read_file(path)));
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("manifest " + path + ": " + e.what());
  }
}

std::vector<std::vector<TokenSeq>> references_from_annotations(
    const std::vector<AnnotationSet>& refs) {
  std::vector<std::vector<TokenSeq>> references(refs.size());
  for (std::size_t s = 0; s < refs.size(); ++s) {
    if (refs[s].annotations.empty()) {
      references[s].push_back(refs[s].source);
      continue;
    }
    for (const auto& [annotator, edits] : refs[s].annotations)
      references[s].push_back(apply_edits(refs[s].source, edits));
  }
  return references;
}

std::string errant_report_json(const ScoreReport& report) {
  json j;
  j["metric"] = "errant-f05";
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f05"] = report.f05;
  j["tp"] = report.counts.tp;
  j["fp"] = report.counts.fp;
  j["fn"] = report.counts.fn;
  json per_sentence = json::array();
  for (const SentenceScore& s : report.per_sentence) {
    json row;
    row["index"] = s.index;
    row["annotator"] = s.annotator;
    row["tp"] = s.counts.tp;
    row["fp"] = s.counts.fp;
    row["fn"] = s.counts.fn;
    per_sentence.push_back(std::move(row));
  }
  j["per_sentence"] = std::move(per_sentence);
  return j.dump(2) + "\n";
}

std::string gleu_report_json(const GleuReport& report) {
  json j;
  j["metric"] = "gleu";
  j["score"] = report.score;
  j["iterations"] = report.per_iteration.size();
  j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

std::string frequency_report_json(const FrequencyPrecisionReport& report) {
  json j;
  j["metric"] = "frequency-precision";
  j["k"] = report.k;
  json buckets = json::array();
  for (const auto& [frequency, bucket] : report.per_frequency) {
    json row;
    row["frequency"] = frequency;
    row["edits_evaluated"] = bucket.edits_evaluated;
    row["tp"] = bucket.tp;
    row["fp"] = bucket.fp;
    row["precision"] = bucket.precision;
    buckets.push_back(std::move(row));
  }
  j["per_frequency"] = std::move(buckets);
  return j.dump(2) + "\n";
}

SweepResult sweep_tau(const std::vector<AnnotationSet>& refs,
                      const std::vector<std::vector<TokenSeq>>& candidate_lists,
                      int k, MetricKind metric, MergeStrategy strategy,
                      unsigned threads, const GleuConfig& gleu_config) {
  if (k < 1) throw ConfigError("sweep needs k >= 1");
  if (refs.size() != candidate_lists.size())
    throw LengthMismatchError(
        "reference corpus has " + std::to_string(refs.size()) +
        " sentences, candidate lists " +
        std::to_string(candidate_lists.size()));
  std::vector<TokenSeq> sources;
  sources.reserve(refs.size());
  for (const AnnotationSet& ref : refs) sources.push_back(ref.source);
  std::vector<std::vector<TokenSeq>> references;
  if (metric == MetricKind::Gleu)
    references = references_from_annotations(refs);

  SweepResult result;
  result.metric = metric;
  double best_score = 0.0;
  for (int tau = 1; tau <= k; ++tau) {
    const auto votes =
        vote_corpus(sources, candidate_lists, {k, tau}, strategy, threads);
    std::vector<TokenSeq> hypotheses;
    hypotheses.reserve(votes.size());
    for (const VoteResult& v : votes) hypotheses.push_back(v.output);

    TauScore score;
    if (metric == MetricKind::ErrantF05) {
      const ScoreReport report =
          score_f05(refs, hypotheses, strategy, threads);
      score.score = report.f05;
      score.precision = report.precision;
      score.recall = report.recall;
    } else {
      score.score = gleu(sources, hypotheses, references, gleu_config).score;
    }
    result.per_tau[tau] = score;
    if (tau == 1 || score.score >= best_score) {
      best_score = score.score;
      result.best_tau = tau;
    }
  }
  return result;
}

std::string sweep_report_json(const SweepResult& result) {
  json j;
  j["metric"] = metric_name(result.metric);
  j["best_tau"] = result.best_tau;
  json per_tau = json::array();
  for (const auto& [tau, score] : result.per_tau) {
    json row;
    row["tau"] = tau;
    row["score"] = score.score;
    if (score.precision) row["precision"] = *score.precision;
    if (score.recall) row["recall"] = *score.recall;
    per_tau.push_back(std::move(row));
  }
  j["per_tau"] = std::move(per_tau);
  return j.dump(2) + "\n";
}

std::vector<BenchRecord> bench_k(
    const std::vector<AnnotationSet>& refs,
    const std::vector<std::vector<TokenSeq>>& candidate_lists,
    const std::vector<int>& k_list, MetricKind metric, MergeStrategy strategy,
    unsigned threads, const GleuConfig& gleu_config) {
  if (k_list.empty()) throw ConfigError("bench needs at least one k");
  if (refs.size() != candidate_lists.size())
    throw LengthMismatchError(
        "reference corpus has " + std::to_string(refs.size()) +
        " sentences, candidate lists " +
        std::to_string(candidate_lists.size()));
  std::vector<TokenSeq> sources;
  sources.reserve(refs.size());
  for (const AnnotationSet& ref : refs) sources.push_back(ref.source);

  std::vector<BenchRecord> records;
  for (const int k : k_list) {
    if (k < 1) throw ConfigError("bench needs k >= 1");
    std::vector<std::vector<TokenSeq>> prefix(candidate_lists.size());
    for (std::size_t s = 0; s < candidate_lists.size(); ++s) {
      if (candidate_lists[s].size() < static_cast<std::size_t>(k))
        throw InsufficientCandidatesError(
            "sentence " + std::to_string(s) + " has " +
            std::to_string(candidate_lists[s].size()) +
            " candidates, bench needs " + std::to_string(k));
      prefix[s].assign(candidate_lists[s].begin(),
                       candidate_lists[s].begin() + k);
    }

    const SweepResult sweep =
        sweep_tau(refs, prefix, k, metric, strategy, threads, gleu_config);

    // Timed pass: one vote + score at the winning threshold.
    const auto start = std::chrono::steady_clock::now();
    const auto votes = vote_corpus(sources, prefix, {k, sweep.best_tau},
                                   strategy, threads);
    std::vector<TokenSeq> hypotheses;
    hypotheses.reserve(votes.size());
    for (const VoteResult& v : votes) hypotheses.push_back(v.output);
    double score;
    if (metric == MetricKind::ErrantF05) {
      score = score_f05(refs, hypotheses, strategy, threads).f05;
    } else {
      score = gleu(sources, hypotheses, references_from_annotations(refs),
                   gleu_config)
                  .score;
    }
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start;

    BenchRecord record;
    record.k = k;
    record.best_tau = sweep.best_tau;
    record.score = score;
    record.mean_seconds_per_sentence =
        refs.empty() ? 0.0 : elapsed.count() / static_cast<double>(refs.size());
    record.mode = "stored";
    records.push_back(record);
  }
  return records;
}

std::string bench_report_json(const std::vector<BenchRecord>& records) {
  json rows = json::array();
  for (const BenchRecord& r : records) {
    json row;
    row["k"] = r.k;
    row["best_tau"] = r.best_tau;
    row["score"] = r.score;
    row["mean_seconds_per_sentence"] = r.mean_seconds_per_sentence;
    row["mode"] = r.mode;
    rows.push_back(std::move(row));
  }
  json j;
  j["records"] = std::move(rows);
  return j.dump(2) + "\n";
}

TemplateSweepResult template_sweep(const std::vector<PromptTemplate>& templates,
                                   const FewShotSet& fewshot,
                                   const std::vector<AnnotationSet>& refs,
                                   const GenConfig& config, int tau,
                                   MetricKind metric, MergeStrategy strategy,
                                   unsigned threads,
                                   const GleuConfig& gleu_config) {
  if (templates.size() < 2)
    throw ConfigError("template sweep needs at least two templates");
  std::vector<TokenSeq> sources;
  sources.reserve(refs.size());
  for (const AnnotationSet& ref : refs) sources.push_back(ref.source);

  TemplateSweepResult result;
  for (const PromptTemplate& tmpl : templates) {
    const GenerationResult gen =
        generate_candidates(sources, tmpl, fewshot, config);
    const auto votes = vote_corpus(sources, gen.candidates, {config.n, tau},
                                   strategy, threads);
    std::vector<TokenSeq> hypotheses;
    hypotheses.reserve(votes.size());
    for (const VoteResult& v : votes) hypotheses.push_back(v.output);
    double score;
    if (metric == MetricKind::ErrantF05) {
      score = score_f05(refs, hypotheses, strategy, threads).f05;
    } else {
      score = gleu(sources, hypotheses, references_from_annotations(refs),
                   gleu_config)
                  .score;
    }
    result.per_template.push_back({tmpl.id, score});
  }

  double sum = 0.0;
  for (const TemplateScore& t : result.per_template) sum += t.score;
  result.mean = sum / static_cast<double>(result.per_template.size());
  double sq = 0.0;
  for (const TemplateScore& t : result.per_template)
    sq += (t.score - result.mean) * (t.score - result.mean);
  result.stddev =
      std::sqrt(sq / static_cast<double>(result.per_template.size() - 1));
  return result;
}

std::string template_sweep_report_json(const TemplateSweepResult& result) {
  json rows = json::array();
  for (const TemplateScore& t : result.per_template) {
    json row;
    row["id"] = t.id;
    row["score"] = t.score;
    rows.push_back(std::move(row));
  }
  json j;
  j["per_template"] = std::move(rows);
  j["mean"] = result.mean;
  j["stddev"] = result.stddev;
  return j.dump(2) + "\n";
}

namespace {

// Internal control flow for run_pipeline's error records.
struct PipelineFailure {
  int exit_code;
  std::string type;
  std::string message;
  std::string path;  // empty unless a file is to blame
};

std::string classify(const std::exception& e) {
  if (dynamic_cast<const AuthError*>(&e)) return "auth";
  if (dynamic_cast<const EndpointError*>(&e)) return "endpoint";
  if (dynamic_cast<const TemplateError*>(&e)) return "template";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const SpanError*>(&e)) return "format";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const Error*>(&e)) return "data";
  return "internal";
}

GenConfig gen_config_from_json(const json& j) {
  GenConfig g;
  g.endpoint = j.at("endpoint").get<std::string>();
  g.model = j.at("model").get<std::string>();
  g.n = j.value("n", 8);
  g.temperature = j.value("temperature", 1.0);
  g.top_p = j.value("top_p", 1.0);
  g.max_tokens = j.value("max_tokens", 256);
  if (j.contains("language") && !j.at("language").is_null())
    g.language = j.at("language").get<std::string>();
  g.timeout_s = j.value("timeout_s", 120.0);
  g.max_retries = j.value("max_retries", 3);
  g.max_in_flight = j.value("max_in_flight", 4);
  g.retry_backoff_ms = j.value("retry_backoff_ms", 250);
  g.separate_requests = j.value("separate_requests", false);
  return g;
}

GleuConfig gleu_config_from_json(const json& cfg) {
  GleuConfig g;
  if (!cfg.contains("gleu")) return g;
  const json& j = cfg.at("gleu");
  g.max_n = j.value("max_n", g.max_n);
  g.iterations = j.value("iterations", g.iterations);
  g.seed = j.value("seed", g.seed);
  return g;
}

bool manifest_matches(const RunManifest& old, const GenConfig& config,
                      const PromptTemplate& tmpl, const FewShotSet& fewshot) {
  return old.complete && old.endpoint == config.endpoint &&
         old.model == config.model && old.template_id == tmpl.id &&
         old.template_body == tmpl.body && old.fewshot == fewshot.pairs &&
         old.language == config.language && old.n == config.n &&
         old.temperature == config.temperature &&
         old.top_p == config.top_p && old.max_tokens == config.max_tokens;
}

// Partial flush after an aborted run: only the completed slots, keeping
// their original idx values.
void write_partial_jsonl(const std::string& path,
                         const std::vector<TokenSeq>& sources,
                         const std::vector<std::vector<TokenSeq>>& lists) {
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (lists[i].empty()) continue;
    json entry;
    entry["idx"] = i;
    entry["source"] = join_tokens(sources[i]);
    json candidates = json::array();
    for (const TokenSeq& candidate : lists[i])
      candidates.push_back(join_tokens(candidate));
    entry["candidates"] = std::move(candidates);
    out += entry.dump();
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace

int run_pipeline(const std::string& config_path, std::ostream& diagnostics) {
  try {
    json cfg;
    try {
      cfg = json::parse(read_file(config_path));
    } catch (const IoError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config " + config_path + ": " + e.what());
    }

    const std::string out_dir = cfg.at("out").get<std::string>();
    fs::create_directories(out_dir);
    const std::string candidates_artifact = out_dir + "/candidates.jsonl";
    const std::string manifest_artifact = out_dir + "/manifest.json";

    const MergeStrategy strategy =
        parse_strategy(cfg.value("strategy", "merge-adjacent"));
    const DecodingKind decoding =
        parse_decoding(cfg.value("decoding", "vote"));
    const unsigned threads =
        static_cast<unsigned>(std::max(0, cfg.value("threads", 1)));

    std::optional<std::vector<AnnotationSet>> refs;
    if (cfg.contains("refs"))
      refs = parse_m2_file(cfg.at("refs").get<std::string>());

    std::vector<TokenSeq> sources;
    std::vector<std::vector<TokenSeq>> candidates;
    bool stored_mode = false;
    std::string stored_path;

    if (cfg.contains("candidates")) {
      stored_mode = true;
      stored_path = cfg.at("candidates").get<std::string>();
      if (!fs::exists(stored_path))
        throw PipelineFailure{2, "missing-file",
                              "candidates file not found: " + stored_path,
                              stored_path};
      // Incomplete until every artifact lands; rewritten at the end.
      {
        json started;
        started["mode"] = "stored";
        started["complete"] = false;
        started["candidates_path"] = stored_path;
        write_file(manifest_artifact, started.dump(2) + "\n");
      }
      CandidateCorpus corpus = read_candidates_jsonl(stored_path);
      sources = std::move(corpus.sources);
      candidates = std::move(corpus.candidates);
      if (cfg.contains("sources")) {
        const auto listed = read_corpus(cfg.at("sources").get<std::string>());
        if (listed != sources)
          throw MismatchError(
              "sources file disagrees with the candidates JSONL");
      }
    } else if (cfg.contains("generation")) {
      sources = read_corpus(cfg.at("sources").get<std::string>());
      const json& gen_cfg_json = cfg.at("generation");
      const GenConfig gen_config = gen_config_from_json(gen_cfg_json);
      const PromptTemplate tmpl =
          load_template(gen_cfg_json.at("template").get<std::string>());
      FewShotSet fewshot;
      if (gen_cfg_json.contains("fewshot")) {
        auto pairs =
            read_pairs_tsv(gen_cfg_json.at("fewshot").get<std::string>());
        if (gen_cfg_json.contains("fewshot_m"))
          fewshot = select_fewshot_middle(
              pairs, gen_cfg_json.at("fewshot_m").get<std::size_t>());
        else
          fewshot.pairs = std::move(pairs);
      }

      bool reuse = false;
      if (fs::exists(candidates_artifact) && fs::exists(manifest_artifact)) {
        try {
          const RunManifest previous = read_manifest(manifest_artifact);
          if (manifest_matches(previous, gen_config, tmpl, fewshot)) {
            CandidateCorpus corpus =
                read_candidates_jsonl(candidates_artifact);
            if (corpus.sources == sources) {
              candidates = std::move(corpus.candidates);
              reuse = true;
            }
          }
        } catch (const std::exception&) {
          reuse = false;  // any doubt: regenerate
        }
      }
      if (!reuse) {
        GenerationResult result =
            try_generate(sources, tmpl, fewshot, gen_config);
        if (!result.manifest.complete) {
          write_partial_jsonl(candidates_artifact, sources,
                              result.candidates);
          write_manifest(manifest_artifact, result.manifest);
          throw PipelineFailure{1, "endpoint", result.manifest.error, ""};
        }
        write_candidates_jsonl(candidates_artifact, sources,
                               result.candidates);
        write_manifest(manifest_artifact, result.manifest);
        candidates = std::move(result.candidates);
      }
    } else {
      throw ConfigError("config needs either 'candidates' or 'generation'");
    }

    // Width: explicit k slices stored lists down to the first k candidates.
    int k;
    if (cfg.contains("k")) {
      k = cfg.at("k").get<int>();
      if (k < 1) throw ConfigError("k must be >= 1");
      for (std::size_t s = 0; s < candidates.size(); ++s) {
        if (candidates[s].size() < static_cast<std::size_t>(k))
          throw InsufficientCandidatesError(
              "sentence " + std::to_string(s) + " has " +
              std::to_string(candidates[s].size()) + " candidates, need " +
              std::to_string(k));
        candidates[s].resize(static_cast<std::size_t>(k));
      }
    } else {
      k = candidates.empty() ? 0 : static_cast<int>(candidates[0].size());
    }
    if (stored_mode)
      write_candidates_jsonl(candidates_artifact, sources, candidates);

    const int tau = cfg.value("tau", 1);

    std::vector<TokenSeq> corrected(sources.size());
    std::vector<AnnotationSet> accepted(sources.size());
    if (decoding == DecodingKind::Vote) {
      const auto votes =
          vote_corpus(sources, candidates, {k, tau}, strategy, threads);
      for (std::size_t s = 0; s < votes.size(); ++s) {
        corrected[s] = votes[s].output;
        accepted[s].source = sources[s];
        accepted[s].annotations[0] = votes[s].accepted;
      }
    } else if (decoding == DecodingKind::Mbr) {
      const UtilityKind utility =
          parse_utility(cfg.value("utility", "edit-f05"));
      const auto picks =
          mbr_corpus(sources, candidates, utility, strategy, threads);
      for (std::size_t s = 0; s < picks.size(); ++s) {
        corrected[s] = picks[s].selected;
        accepted[s].source = sources[s];
        accepted[s].annotations[0] =
            extract_edits(sources[s], corrected[s], strategy);
      }
    } else {
      for (std::size_t s = 0; s < sources.size(); ++s) {
        if (candidates[s].empty())
          throw EmptyCandidatesError("sentence " + std::to_string(s) +
                                     " has no candidates");
        corrected[s] = candidates[s][0];
        accepted[s].source = sources[s];
        accepted[s].annotations[0] =
            extract_edits(sources[s], corrected[s], strategy);
      }
    }

    write_corpus(out_dir + "/corrected.txt", corrected);
    write_file(out_dir + "/accepted.m2", serialize_m2(accepted));

    if (refs) {
      if (refs->size() != sources.size())
        throw LengthMismatchError(
            "reference corpus has " + std::to_string(refs->size()) +
            " sentences, corpus has " + std::to_string(sources.size()));
      for (std::size_t s = 0; s < refs->size(); ++s)
        if ((*refs)[s].source != sources[s])
          throw MismatchError("reference source differs at sentence " +
                              std::to_string(s));
      const MetricKind metric =
          parse_metric(cfg.value("metric", "errant-f05"));
      std::string report;
      if (metric == MetricKind::ErrantF05) {
        report =
            errant_report_json(score_f05(*refs, corrected, strategy, threads));
      } else {
        report = gleu_report_json(gleu(sources, corrected,
                                       references_from_annotations(*refs),
                                       gleu_config_from_json(cfg)));
      }
      write_file(out_dir + "/report.json", report);
    }

    if (stored_mode) {
      json done;
      done["mode"] = "stored";
      done["complete"] = true;
      done["candidates_path"] = stored_path;
      done["decoding"] = decoding_name(decoding);
      done["k"] = k;
      done["tau"] = tau;
      done["strategy"] = strategy_name(strategy);
      write_file(manifest_artifact, done.dump(2) + "\n");
    }
    return 0;
  } catch (const PipelineFailure& failure) {
    json record;
    record["error"]["type"] = failure.type;
    record["error"]["message"] = failure.message;
    if (!failure.path.empty()) record["error"]["path"] = failure.path;
    diagnostics << record.dump() << "\n";
    return failure.exit_code;
  } catch (const std::exception& e) {
    json record;
    record["error"]["type"] = classify(e);
    record["error"]["message"] = e.what();
    diagnostics << record.dump() << "\n";
    return 1;
  }
}

}  // namespace gecvote

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gecvote/align.hpp"
#include "gecvote/generation.hpp"
#include "gecvote/m2.hpp"
#include "gecvote/mbr.hpp"
#include "gecvote/metrics.hpp"
#include "gecvote/pipeline.hpp"
#include "gecvote/text.hpp"
#include "gecvote/voting.hpp"

namespace {

using namespace gecvote;

void emit(const std::optional<std::string>& out_file,
          const std::string& content) {
  if (!out_file) {
    std::cout << content;
    return;
  }
  std::ofstream out(*out_file, std::ios::binary);
  if (!out) throw IoError("cannot write " + *out_file);
  out << content;
}

std::vector<AnnotationSet> extract_corpus(
    const std::vector<TokenSeq>& sources,
    const std::vector<TokenSeq>& hypotheses, MergeStrategy strategy) {
  if (sources.size() != hypotheses.size())
    throw LengthMismatchError(
        "source corpus has " + std::to_string(sources.size()) +
        " sentences, hypothesis corpus " +
        std::to_string(hypotheses.size()));
  std::vector<AnnotationSet> blocks(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    blocks[s].source = sources[s];
    blocks[s].annotations[0] =
        extract_edits(sources[s], hypotheses[s], strategy);
  }
  return blocks;
}

std::string score_report(const std::vector<AnnotationSet>& refs,
                         const std::vector<TokenSeq>& hypotheses,
                         MetricKind metric, MergeStrategy strategy,
                         unsigned threads, const GleuConfig& gleu_config) {
  if (metric == MetricKind::ErrantF05)
    return errant_report_json(score_f05(refs, hypotheses, strategy, threads));
  std::vector<TokenSeq> sources;
  sources.reserve(refs.size());
  for (const AnnotationSet& ref : refs) sources.push_back(ref.source);
  return gleu_report_json(
      gleu(sources, hypotheses, references_from_annotations(refs),
           gleu_config));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gecvote: edit-level majority voting over sampled grammatical error "
      "correction candidates, with MBR and greedy baselines"};
  app.require_subcommand(1);

  // Shared option storage. Each subcommand registers only what it uses.
  std::string src_file, refs_file, candidates_file, config_file;
  std::vector<std::string> hyp_files;
  std::optional<std::string> out_file;
  std::string strategy_name_opt = "merge-adjacent";
  std::string metric_opt = "errant-f05";
  std::string utility_opt = "edit-f05";
  std::string template_opt = "tool-en";
  std::vector<std::string> templates_opt;
  std::string fewshot_file, lang;
  std::string endpoint, model;
  int k = 0;
  std::vector<int> k_list;
  int tau = 1;
  int n = 8;
  int iterations = 500;
  int max_tokens = 256;
  int max_retries = 3;
  int max_in_flight = 4;
  int backoff_ms = 250;
  int fewshot_m = -1;
  unsigned threads = 1;
  std::uint64_t seed = 1234;
  double temperature = 1.0, top_p = 1.0, timeout_s = 120.0;
  bool separate_requests = false;

  auto add_strategy = [&](CLI::App* cmd) {
    cmd->add_option("--strategy", strategy_name_opt,
                    "Edit merging: merge-adjacent, all-split, or all-merge")
        ->default_str("merge-adjacent");
  };
  auto add_threads = [&](CLI::App* cmd) {
    cmd->add_option("--threads", threads,
                    "Worker threads (0 = hardware concurrency)")
        ->default_val(1);
  };
  auto add_out_file = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_file, "Output file (default: stdout)");
  };
  auto add_metric = [&](CLI::App* cmd) {
    cmd->add_option("--metric", metric_opt, "errant-f05 or gleu")
        ->default_str("errant-f05");
    cmd->add_option("--iterations", iterations,
                    "GLEU reference-sampling iterations")
        ->default_val(500);
    cmd->add_option("--seed", seed, "GLEU sampling seed")->default_val(1234);
  };
  auto add_generation = [&](CLI::App* cmd) {
    cmd->add_option("--endpoint", endpoint,
                    "Base URL; requests go to {endpoint}/chat/completions "
                    "with the key from GECVOTE_API_KEY")
        ->required();
    cmd->add_option("--model", model, "Model id")->required();
    cmd->add_option("--lang", lang,
                    "Language name substituted for [LANG]");
    cmd->add_option("--n", n, "Candidates per source")->default_val(8);
    cmd->add_option("--temperature", temperature, "Sampling temperature")
        ->default_val(1.0);
    cmd->add_option("--top-p", top_p, "Nucleus sampling mass")
        ->default_val(1.0);
    cmd->add_option("--max-tokens", max_tokens, "Completion token cap")
        ->default_val(256);
    cmd->add_option("--timeout", timeout_s, "Per-request timeout, seconds")
        ->default_val(120.0);
    cmd->add_option("--max-retries", max_retries,
                    "Extra attempts after a transient failure")
        ->default_val(3);
    cmd->add_option("--max-in-flight", max_in_flight,
                    "Concurrent requests")
        ->default_val(4);
    cmd->add_option("--backoff-ms", backoff_ms,
                    "Initial retry backoff, doubled per retry")
        ->default_val(250);
    cmd->add_flag("--separate-requests", separate_requests,
                  "Issue n single-completion requests per source");
    cmd->add_option("--fewshot", fewshot_file,
                    "TSV of source<TAB>corrected pairs");
    cmd->add_option("--fewshot-m", fewshot_m,
                    "Take the middle m pairs of the TSV, sorted by "
                    "source length (default: use all pairs)");
  };

  auto make_fewshot = [&]() {
    FewShotSet fewshot;
    if (!fewshot_file.empty()) {
      auto pairs = read_pairs_tsv(fewshot_file);
      if (fewshot_m >= 0)
        fewshot = select_fewshot_middle(pairs,
                                        static_cast<std::size_t>(fewshot_m));
      else
        fewshot.pairs = std::move(pairs);
    }
    return fewshot;
  };
  auto make_gen_config = [&]() {
    GenConfig config;
    config.endpoint = endpoint;
    config.model = model;
    config.n = n;
    config.temperature = temperature;
    config.top_p = top_p;
    config.max_tokens = max_tokens;
    if (!lang.empty()) config.language = lang;
    config.timeout_s = timeout_s;
    config.max_retries = max_retries;
    config.max_in_flight = max_in_flight;
    config.retry_backoff_ms = backoff_ms;
    config.separate_requests = separate_requests;
    return config;
  };
  auto make_gleu_config = [&]() {
    GleuConfig config;
    config.iterations = iterations;
    config.seed = seed;
    return config;
  };

  // extract
  auto* cmd_extract = app.add_subcommand(
      "extract", "Align source and hypothesis corpora and emit edits as M2");
  cmd_extract->add_option("--src", src_file, "Source corpus, one sentence per line")
      ->required();
  cmd_extract->add_option("--hyp", hyp_files, "Hypothesis corpus")
      ->required()
      ->expected(1);
  add_strategy(cmd_extract);
  add_out_file(cmd_extract);

  // vote
  auto* cmd_vote = app.add_subcommand(
      "vote",
      "Keep edits appearing in at least tau of the k candidates and apply "
      "them to the source");
  cmd_vote->add_option("--candidates", candidates_file,
                       "Candidates JSONL from generate")
      ->required();
  cmd_vote->add_option("--src", src_file,
                       "Optional source corpus cross-check");
  cmd_vote->add_option("--k", k, "Candidates per sentence "
                                 "(default: width of the JSONL lists)");
  cmd_vote->add_option("--tau", tau, "Acceptance threshold")->default_val(1);
  add_strategy(cmd_vote);
  add_threads(cmd_vote);
  cmd_vote->add_option(
      "--out", out_file,
      "Write <out>/corrected.txt and <out>/accepted.m2 instead of printing "
      "corrected sentences");

  // mbr
  auto* cmd_mbr = app.add_subcommand(
      "mbr",
      "Pick the candidate with the highest mean utility against all "
      "candidates; ties select the lowest index");
  cmd_mbr->add_option("--candidates", candidates_file, "Candidates JSONL")
      ->required();
  cmd_mbr->add_option("--utility", utility_opt,
                      "edit-f05 or sentence-gleu")
      ->default_str("edit-f05");
  add_strategy(cmd_mbr);
  add_threads(cmd_mbr);
  add_out_file(cmd_mbr);

  // score
  auto* cmd_score = app.add_subcommand(
      "score", "Score hypothesis corpora against M2 references");
  cmd_score->add_option("--refs", refs_file, "Reference M2 file")->required();
  cmd_score->add_option("--hyp", hyp_files, "Hypothesis corpora")
      ->required()
      ->expected(1, -1);
  add_metric(cmd_score);
  add_strategy(cmd_score);
  add_threads(cmd_score);
  add_out_file(cmd_score);

  // sweep-tau
  auto* cmd_sweep = app.add_subcommand(
      "sweep-tau",
      "Score the vote output for every tau in [1, k]; ties on the best "
      "score go to the larger tau");
  cmd_sweep->add_option("--refs", refs_file, "Development M2 file")
      ->required();
  cmd_sweep->add_option("--candidates", candidates_file, "Candidates JSONL")
      ->required();
  cmd_sweep->add_option("--k", k, "Candidates per sentence "
                                  "(default: width of the JSONL lists)");
  add_metric(cmd_sweep);
  add_strategy(cmd_sweep);
  add_threads(cmd_sweep);
  add_out_file(cmd_sweep);

  // bench-k
  auto* cmd_bench = app.add_subcommand(
      "bench-k",
      "For each k: sweep tau over the first k stored candidates, then time "
      "one vote+score pass at the best tau");
  cmd_bench->add_option("--refs", refs_file, "Development M2 file")
      ->required();
  cmd_bench->add_option("--candidates", candidates_file, "Candidates JSONL")
      ->required();
  cmd_bench->add_option("--k", k_list, "k values (repeatable)")
      ->required()
      ->expected(1, -1);
  add_metric(cmd_bench);
  add_strategy(cmd_bench);
  add_threads(cmd_bench);
  add_out_file(cmd_bench);

  // generate
  auto* cmd_generate = app.add_subcommand(
      "generate",
      "Sample candidates from a chat-completion endpoint and store them "
      "with a replayable manifest");
  cmd_generate->add_option("--src", src_file, "Source corpus")->required();
  cmd_generate
      ->add_option("--template", template_opt,
                   "Built-in template id or template file")
      ->default_str("tool-en");
  add_generation(cmd_generate);
  cmd_generate
      ->add_option("--out", out_file,
                   "Directory for candidates.jsonl and manifest.json")
      ->required();

  // template-sweep
  auto* cmd_templates = app.add_subcommand(
      "template-sweep",
      "Run generate -> vote -> score once per template and report "
      "per-template scores with mean and sample standard deviation");
  cmd_templates->add_option("--refs", refs_file, "Reference M2 file")
      ->required();
  cmd_templates->add_option(
      "--templates", templates_opt,
      "Template ids or files (default: sweep-1 .. sweep-10)");
  cmd_templates->add_option("--tau", tau, "Voting threshold")
      ->default_val(1);
  add_metric(cmd_templates);
  add_strategy(cmd_templates);
  add_threads(cmd_templates);
  add_generation(cmd_templates);
  add_out_file(cmd_templates);

  // analyze-freq
  auto* cmd_freq = app.add_subcommand(
      "analyze-freq",
      "Bucket union edits by how many of the k candidates contain them and "
      "report per-bucket precision");
  cmd_freq->add_option("--refs", refs_file, "Reference M2 file")->required();
  cmd_freq->add_option("--candidates", candidates_file, "Candidates JSONL")
      ->required();
  cmd_freq->add_option("--k", k, "Candidates per sentence "
                                 "(default: width of the JSONL lists)");
  add_strategy(cmd_freq);
  add_threads(cmd_freq);
  add_out_file(cmd_freq);

  // pipeline
  auto* cmd_pipeline = app.add_subcommand(
      "pipeline",
      "Run the configured generate/load -> vote|mbr|greedy -> score flow "
      "and write all artifacts to the configured directory");
  cmd_pipeline->add_option("--config", config_file, "Pipeline JSON config")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const MergeStrategy strategy = parse_strategy(strategy_name_opt);

    if (*cmd_extract) {
      const auto sources = read_corpus(src_file);
      const auto hypotheses = read_corpus(hyp_files[0]);
      emit(out_file, serialize_m2(extract_corpus(sources, hypotheses,
                                                 strategy)));
    } else if (*cmd_vote) {
      CandidateCorpus corpus = read_candidates_jsonl(candidates_file);
      if (!src_file.empty() && read_corpus(src_file) != corpus.sources)
        throw MismatchError(
            "sources file disagrees with the candidates JSONL");
      const int width =
          k > 0 ? k
                : (corpus.candidates.empty()
                       ? 0
                       : static_cast<int>(corpus.candidates[0].size()));
      for (auto& list : corpus.candidates) {
        if (list.size() < static_cast<std::size_t>(width))
          throw InsufficientCandidatesError(
              "a sentence has fewer than k candidates");
        list.resize(static_cast<std::size_t>(width));
      }
      const auto votes = vote_corpus(corpus.sources, corpus.candidates,
                                     {width, tau}, strategy, threads);
      std::vector<TokenSeq> corrected;
      std::vector<AnnotationSet> accepted(votes.size());
      for (std::size_t s = 0; s < votes.size(); ++s) {
        corrected.push_back(votes[s].output);
        accepted[s].source = corpus.sources[s];
        accepted[s].annotations[0] = votes[s].accepted;
      }
      if (out_file) {
        std::filesystem::create_directories(*out_file);
        write_corpus(*out_file + "/corrected.txt", corrected);
        std::ofstream m2(*out_file + "/accepted.m2", std::ios::binary);
        if (!m2) throw IoError("cannot write " + *out_file + "/accepted.m2");
        m2 << serialize_m2(accepted);
      } else {
        for (const TokenSeq& sentence : corrected)
          std::cout << join_tokens(sentence) << "\n";
      }
    } else if (*cmd_mbr) {
      const CandidateCorpus corpus = read_candidates_jsonl(candidates_file);
      const auto picks = mbr_corpus(corpus.sources, corpus.candidates,
                                    parse_utility(utility_opt), strategy,
                                    threads);
      std::string out;
      for (const MbrResult& pick : picks)
        out += join_tokens(pick.selected) + "\n";
      emit(out_file, out);
    } else if (*cmd_score) {
      const auto refs = parse_m2_file(refs_file);
      const MetricKind metric = parse_metric(metric_opt);
      if (hyp_files.size() == 1) {
        emit(out_file, score_report(refs, read_corpus(hyp_files[0]), metric,
                                    strategy, threads, make_gleu_config()));
      } else {
        std::string out = "[\n";
        for (std::size_t i = 0; i < hyp_files.size(); ++i) {
          std::string report =
              score_report(refs, read_corpus(hyp_files[i]), metric, strategy,
                           threads, make_gleu_config());
          if (!report.empty() && report.back() == '\n') report.pop_back();
          out += report;
          out += i + 1 < hyp_files.size() ? ",\n" : "\n";
        }
        out += "]\n";
        emit(out_file, out);
      }
    } else if (*cmd_sweep) {
      const auto refs = parse_m2_file(refs_file);
      const CandidateCorpus corpus = read_candidates_jsonl(candidates_file);
      const int width =
          k > 0 ? k
                : (corpus.candidates.empty()
                       ? 1
                       : static_cast<int>(corpus.candidates[0].size()));
      emit(out_file,
           sweep_report_json(sweep_tau(refs, corpus.candidates, width,
                                       parse_metric(metric_opt), strategy,
                                       threads, make_gleu_config())));
    } else if (*cmd_bench) {
      const auto refs = parse_m2_file(refs_file);
      const CandidateCorpus corpus = read_candidates_jsonl(candidates_file);
      emit(out_file,
           bench_report_json(bench_k(refs, corpus.candidates, k_list,
                                     parse_metric(metric_opt), strategy,
                                     threads, make_gleu_config())));
    } else if (*cmd_generate) {
      const auto sources = read_corpus(src_file);
      const PromptTemplate tmpl = load_template(template_opt);
      const GenerationResult result =
          try_generate(sources, tmpl, make_fewshot(), make_gen_config());
      std::filesystem::create_directories(*out_file);
      write_candidates_jsonl(*out_file + "/candidates.jsonl", sources,
                             result.candidates);
      write_manifest(*out_file + "/manifest.json", result.manifest);
      if (!result.manifest.complete)
        throw EndpointError(result.manifest.failed_index.value_or(0),
                            result.manifest.error);
    } else if (*cmd_templates) {
      const auto refs = parse_m2_file(refs_file);
      std::vector<PromptTemplate> templates;
      if (templates_opt.empty()) {
        for (int i = 1; i <= 10; ++i)
          templates.push_back(find_template("sweep-" + std::to_string(i)));
      } else {
        for (const std::string& id : templates_opt)
          templates.push_back(load_template(id));
      }
      emit(out_file, template_sweep_report_json(template_sweep(
                         templates, make_fewshot(), refs, make_gen_config(),
                         tau, parse_metric(metric_opt), strategy, threads,
                         make_gleu_config())));
    } else if (*cmd_freq) {
      const auto refs = parse_m2_file(refs_file);
      const CandidateCorpus corpus = read_candidates_jsonl(candidates_file);
      const int width =
          k > 0 ? k
                : (corpus.candidates.empty()
                       ? 1
                       : static_cast<int>(corpus.candidates[0].size()));
      emit(out_file,
           frequency_report_json(frequency_precision(
               refs, corpus.candidates, width, strategy, threads)));
    } else if (*cmd_pipeline) {
      return run_pipeline(config_file, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

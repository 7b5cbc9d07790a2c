#include "gecvote/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "gecvote/m2.hpp"
#include "gecvote/voting.hpp"
#include "testutil.hpp"

using namespace gecvote;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gecvote-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

AnnotationSet ref_with_edit(const std::string& source, Edit edit) {
  AnnotationSet set;
  set.source = tokenize(source);
  set.annotations[0] = EditSet{set.source.size(), {std::move(edit)}};
  return set;
}

// Three sentences, three candidates each: the planted fix [0,1)->A appears
// twice, each stray edit once. The best vote threshold is 2.
struct Planted {
  std::vector<AnnotationSet> refs;
  std::vector<TokenSeq> sources;
  std::vector<std::vector<TokenSeq>> lists;
};

Planted make_planted() {
  Planted p;
  for (int s = 0; s < 3; ++s) {
    p.refs.push_back(ref_with_edit("a b c d e", Edit{0, 1, {"A"}, ""}));
    p.sources.push_back(p.refs.back().source);
    p.lists.push_back({tokenize("A b c d e"), tokenize("A b x d e"),
                       tokenize("a b c d y")});
  }
  return p;
}

struct MockServer {
  httplib::Server srv;
  int port = 0;
  std::thread thread;

  void start() {
    port = srv.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }

  ~MockServer() {
    srv.stop();
    if (thread.joinable()) thread.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port);
  }
};

std::string n_choices(const std::string& content, int n) {
  nlohmann::json choices = nlohmann::json::array();
  for (int i = 0; i < n; ++i)
    choices.push_back({{"message", {{"content", content}}}});
  return nlohmann::json{{"choices", choices}}.dump();
}

std::string prompt_of(const httplib::Request& req) {
  return nlohmann::json::parse(req.body)
      .at("messages")
      .at(0)
      .at("content")
      .get<std::string>();
}

}  // namespace

TEST_CASE("metric and decoding names round-trip") {
  for (const auto m : {MetricKind::ErrantF05, MetricKind::Gleu})
    CHECK(parse_metric(metric_name(m)) == m);
  CHECK_THROWS_AS(parse_metric("bleu"), ConfigError);
  for (const auto d : {DecodingKind::Vote, DecodingKind::Mbr,
                       DecodingKind::Greedy})
    CHECK(parse_decoding(decoding_name(d)) == d);
  CHECK_THROWS_AS(parse_decoding("argmax"), ConfigError);
}

TEST_CASE("corpus files round-trip") {
  const fs::path dir = fresh_dir("corpus");
  const std::vector<TokenSeq> sentences = {
      tokenize("a b c"), tokenize(""), tokenize("x")};
  write_corpus((dir / "c.txt").string(), sentences);
  CHECK(read_corpus((dir / "c.txt").string()) == sentences);
  CHECK(slurp(dir / "c.txt") == "a b c\n\nx\n");
  CHECK_THROWS_AS(read_corpus((dir / "missing.txt").string()), IoError);
}

TEST_CASE("candidates JSONL round-trips and orders by idx") {
  const fs::path dir = fresh_dir("jsonl");
  const std::vector<TokenSeq> sources = {tokenize("a b"), tokenize("c")};
  const std::vector<std::vector<TokenSeq>> lists = {
      {tokenize("a x"), tokenize("a b")}, {tokenize("c"), tokenize("d")}};
  const std::string path = (dir / "cand.jsonl").string();
  write_candidates_jsonl(path, sources, lists);
  const CandidateCorpus in = read_candidates_jsonl(path);
  CHECK(in.sources == sources);
  CHECK(in.candidates == lists);

  // Lines stored out of order come back sorted by idx.
  put(dir / "shuffled.jsonl",
      R"({"idx": 1, "source": "second", "candidates": ["s"]})"
      "\n"
      R"({"idx": 0, "source": "first", "candidates": ["f"]})"
      "\n");
  const CandidateCorpus shuffled =
      read_candidates_jsonl((dir / "shuffled.jsonl").string());
  CHECK(shuffled.sources[0] == tokenize("first"));
  CHECK(shuffled.sources[1] == tokenize("second"));
}

TEST_CASE("candidates JSONL rejects malformed input with line numbers") {
  const fs::path dir = fresh_dir("jsonl-bad");
  const auto expect_line = [&](const std::string& name,
                               const std::string& content,
                               std::size_t line) {
    put(dir / name, content);
    try {
      read_candidates_jsonl((dir / name).string());
      FAIL("expected FormatError from " << name);
    } catch (const FormatError& e) {
      CHECK(e.line == line);
    }
  };
  const std::string good =
      R"({"idx": 0, "source": "a", "candidates": ["a"]})" "\n";
  expect_line("blank.jsonl", good + "\n" + good, 2);
  expect_line("notjson.jsonl", good + "not json\n", 2);
  expect_line("notobject.jsonl", "42\n", 1);
  expect_line("missingkey.jsonl", R"({"idx": 0, "source": "a"})" "\n", 1);
  expect_line("range.jsonl",
              R"({"idx": 5, "source": "a", "candidates": []})" "\n", 1);
  expect_line("repeat.jsonl",
              good + R"({"idx": 0, "source": "b", "candidates": []})" "\n",
              2);
}

TEST_CASE("few-shot TSV parsing") {
  const fs::path dir = fresh_dir("tsv");
  put(dir / "pairs.tsv", "He go .\tHe goes .\na b\ta b\n");
  const auto pairs = read_pairs_tsv((dir / "pairs.tsv").string());
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "He go .");
  CHECK(pairs[0].second == "He goes .");

  put(dir / "bad.tsv", "a\tb\nno tab here\n");
  try {
    read_pairs_tsv((dir / "bad.tsv").string());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line == 2);
  }
}

TEST_CASE("templates load from builtin ids or files") {
  CHECK(load_template("tool-en").id == "tool-en");
  const fs::path dir = fresh_dir("tmpl");
  put(dir / "custom.txt", "Fix: [FEWSHOT][SOURCE]\n");
  const PromptTemplate custom = load_template((dir / "custom.txt").string());
  CHECK(custom.id == "custom");
  CHECK(custom.body == "Fix: [FEWSHOT][SOURCE]");
  CHECK_THROWS_AS(load_template((dir / "absent.txt").string()), ConfigError);
  put(dir / "broken.txt", "[FEWSHOT] only\n");
  CHECK_THROWS_AS(load_template((dir / "broken.txt").string()),
                  TemplateError);
}

TEST_CASE("manifests round-trip through disk") {
  const fs::path dir = fresh_dir("manifest");
  RunManifest m;
  m.endpoint = "http://127.0.0.1:9/v1";
  m.model = "gpt-mock";
  m.template_id = "tool-en";
  m.template_body = find_template("tool-en").body;
  m.fewshot = {{"a", "b"}, {"c", "d"}};
  m.language = "German";
  m.n = 8;
  m.temperature = 0.7;
  m.top_p = 0.9;
  m.max_tokens = 128;
  m.timestamp = "2026-01-02T03:04:05Z";
  m.complete = false;
  m.failed_index = 3;
  m.error = "HTTP 503";

  const std::string path = (dir / "manifest.json").string();
  write_manifest(path, m);
  const RunManifest r = read_manifest(path);
  CHECK(r.endpoint == m.endpoint);
  CHECK(r.model == m.model);
  CHECK(r.template_id == m.template_id);
  CHECK(r.template_body == m.template_body);
  CHECK(r.fewshot == m.fewshot);
  CHECK(r.language == m.language);
  CHECK(r.n == m.n);
  CHECK(r.temperature == m.temperature);
  CHECK(r.top_p == m.top_p);
  CHECK(r.max_tokens == m.max_tokens);
  CHECK(r.timestamp == m.timestamp);
  CHECK(r.complete == m.complete);
  CHECK(r.failed_index == m.failed_index);
  CHECK(r.error == m.error);

  m.language.reset();
  m.failed_index.reset();
  m.complete = true;
  m.error.clear();
  write_manifest(path, m);
  const RunManifest r2 = read_manifest(path);
  CHECK(!r2.language.has_value());
  CHECK(!r2.failed_index.has_value());
  CHECK(r2.complete);

  CHECK_THROWS_AS(read_manifest((dir / "absent.json").string()), IoError);
  put(dir / "garbage.json", "{]");
  CHECK_THROWS_AS(read_manifest((dir / "garbage.json").string()),
                  ConfigError);
}

TEST_CASE("references come from applying each annotator") {
  AnnotationSet two;
  two.source = tokenize("a b");
  two.annotations[0] = EditSet{2, {Edit{0, 1, {"A"}, ""}}};
  two.annotations[1] = EditSet{2, {Edit{1, 2, {"B"}, ""}}};
  AnnotationSet none;
  none.source = tokenize("c d");

  const auto refs = references_from_annotations({two, none});
  REQUIRE(refs.size() == 2);
  REQUIRE(refs[0].size() == 2);
  CHECK(refs[0][0] == tokenize("A b"));
  CHECK(refs[0][1] == tokenize("a B"));
  REQUIRE(refs[1].size() == 1);
  CHECK(refs[1][0] == tokenize("c d"));
}

TEST_CASE("report serializers keep their schema and key order") {
  ScoreReport score;
  score.counts = {2, 1, 2};
  score.precision = precision_of(score.counts);
  score.recall = recall_of(score.counts);
  score.f05 = f_beta(score.counts);
  score.per_sentence.push_back({0, 1, {2, 1, 2}});
  const std::string errant = errant_report_json(score);
  CHECK(errant.find("\"metric\": \"errant-f05\"") != std::string::npos);
  const auto parsed = nlohmann::json::parse(errant);
  CHECK(parsed.at("tp") == 2);
  CHECK(parsed.at("fp") == 1);
  CHECK(parsed.at("fn") == 2);
  CHECK(parsed.at("per_sentence").at(0).at("annotator") == 1);
  // Insertion order survives serialization.
  CHECK(errant.find("\"precision\"") < errant.find("\"recall\""));
  CHECK(errant.find("\"recall\"") < errant.find("\"f05\""));

  GleuReport g;
  g.score = 0.5;
  g.per_iteration.assign(7, 0.5);
  g.seed = 42;
  const auto gleu_parsed = nlohmann::json::parse(gleu_report_json(g));
  CHECK(gleu_parsed.at("metric") == "gleu");
  CHECK(gleu_parsed.at("score") == 0.5);
  CHECK(gleu_parsed.at("iterations") == 7);
  CHECK(gleu_parsed.at("seed") == 42);

  FrequencyPrecisionReport freq;
  freq.k = 2;
  freq.per_frequency[1] = {3, 1, 2, 1.0 / 3.0};
  freq.per_frequency[2] = {0, 0, 0, 1.0};
  const auto freq_parsed = nlohmann::json::parse(frequency_report_json(freq));
  CHECK(freq_parsed.at("metric") == "frequency-precision");
  CHECK(freq_parsed.at("per_frequency").size() == 2);
  CHECK(freq_parsed.at("per_frequency").at(0).at("frequency") == 1);
}

TEST_CASE("the threshold sweep finds the planted optimum") {
  const Planted p = make_planted();
  const SweepResult sweep =
      sweep_tau(p.refs, p.lists, 3, MetricKind::ErrantF05);
  CHECK(sweep.best_tau == 2);
  REQUIRE(sweep.per_tau.size() == 3);
  CHECK(sweep.per_tau.at(2).score == 1.0);
  CHECK(sweep.per_tau.at(2).precision.has_value());
  CHECK(*sweep.per_tau.at(2).precision == 1.0);
  CHECK(sweep.per_tau.at(1).score < 1.0);
  CHECK(sweep.per_tau.at(3).score == 0.0);
  // Precision never drops as the threshold rises.
  double last = -1.0;
  for (const auto& [tau, ts] : sweep.per_tau) {
    CHECK(*ts.precision >= last);
    last = *ts.precision;
  }

  const std::string json_text = sweep_report_json(sweep);
  const auto parsed = nlohmann::json::parse(json_text);
  CHECK(parsed.at("best_tau") == 2);
  CHECK(parsed.at("per_tau").size() == 3);
  CHECK(parsed.at("per_tau").at(0).contains("precision"));

  const SweepResult via_gleu =
      sweep_tau(p.refs, p.lists, 3, MetricKind::Gleu,
                MergeStrategy::MergeAdjacent, 1, {4, 5, 11});
  CHECK(via_gleu.best_tau == 2);
  const auto gleu_json =
      nlohmann::json::parse(sweep_report_json(via_gleu));
  CHECK(!gleu_json.at("per_tau").at(0).contains("precision"));

  CHECK_THROWS_AS(sweep_tau(p.refs, p.lists, 0, MetricKind::ErrantF05),
                  ConfigError);
  CHECK_THROWS_AS(sweep_tau(p.refs, {}, 3, MetricKind::ErrantF05),
                  LengthMismatchError);
}

TEST_CASE("sweep score ties resolve to the larger threshold") {
  const AnnotationSet ref = ref_with_edit("a b", Edit{0, 1, {"A"}, ""});
  const std::vector<std::vector<TokenSeq>> lists = {
      {tokenize("A b"), tokenize("A b")}};
  const SweepResult sweep = sweep_tau({ref}, lists, 2, MetricKind::ErrantF05);
  CHECK(sweep.per_tau.at(1).score == sweep.per_tau.at(2).score);
  CHECK(sweep.best_tau == 2);
}

TEST_CASE("bench slices candidate prefixes and reports stored-mode timing") {
  const Planted p = make_planted();
  const auto records =
      bench_k(p.refs, p.lists, {1, 3}, MetricKind::ErrantF05);
  REQUIRE(records.size() == 2);

  CHECK(records[0].k == 1);
  CHECK(records[0].best_tau == 1);
  // k=1 voting passes the first candidate through.
  std::vector<TokenSeq> firsts;
  for (const auto& list : p.lists) firsts.push_back(list[0]);
  const double direct = score_f05(p.refs, firsts).f05;
  CHECK(records[0].score == doctest::Approx(direct));

  CHECK(records[1].k == 3);
  CHECK(records[1].best_tau == 2);
  CHECK(records[1].score == 1.0);
  for (const BenchRecord& r : records) {
    CHECK(r.mode == "stored");
    CHECK(r.mean_seconds_per_sentence >= 0.0);
  }

  const auto parsed = nlohmann::json::parse(bench_report_json(records));
  CHECK(parsed.at("records").size() == 2);
  CHECK(parsed.at("records").at(1).at("best_tau") == 2);

  CHECK_THROWS_AS(bench_k(p.refs, p.lists, {4}, MetricKind::ErrantF05),
                  InsufficientCandidatesError);
  CHECK_THROWS_AS(bench_k(p.refs, p.lists, {}, MetricKind::ErrantF05),
                  ConfigError);
}

TEST_CASE("template sweep scores each template's generations") {
  setenv("GECVOTE_API_KEY", "test-key-123", 1);
  MockServer mock;
  mock.srv.Post("/chat/completions", [&](const httplib::Request& req,
                                         httplib::Response& res) {
    const std::string prompt = prompt_of(req);
    const int n = nlohmann::json::parse(req.body).at("n").get<int>();
    const bool good = prompt.rfind("GOOD", 0) == 0;
    res.set_content(n_choices(good ? "A b" : "a b", n), "application/json");
  });
  mock.start();

  const AnnotationSet ref = ref_with_edit("a b", Edit{0, 1, {"A"}, ""});
  GenConfig config;
  config.endpoint = mock.endpoint();
  config.model = "mock";
  config.n = 2;
  config.retry_backoff_ms = 1;

  const std::vector<PromptTemplate> contrast = {
      make_template("good", "GOOD [FEWSHOT][SOURCE]"),
      make_template("bad", "BAD [FEWSHOT][SOURCE]"),
  };
  const TemplateSweepResult split =
      template_sweep(contrast, {}, {ref}, config, 1, MetricKind::ErrantF05);
  REQUIRE(split.per_template.size() == 2);
  CHECK(split.per_template[0].id == "good");
  CHECK(split.per_template[0].score == 1.0);
  CHECK(split.per_template[1].score == 0.0);
  CHECK(split.mean == doctest::Approx(0.5));
  CHECK(split.stddev == doctest::Approx(std::sqrt(0.5)));

  const std::vector<PromptTemplate> same = {
      make_template("good-1", "GOOD [FEWSHOT][SOURCE]"),
      make_template("good-2", "GOOD x [FEWSHOT][SOURCE]"),
  };
  const TemplateSweepResult flat =
      template_sweep(same, {}, {ref}, config, 1, MetricKind::ErrantF05);
  CHECK(flat.mean == 1.0);
  CHECK(flat.stddev == 0.0);

  const auto parsed =
      nlohmann::json::parse(template_sweep_report_json(split));
  CHECK(parsed.at("per_template").size() == 2);
  CHECK(parsed.at("mean") == 0.5);

  CHECK_THROWS_AS(template_sweep({contrast[0]}, {}, {ref}, config, 1,
                                 MetricKind::ErrantF05),
                  ConfigError);
}

TEST_CASE("stored pipeline runs are reproducible byte for byte") {
  const Planted p = make_planted();
  const fs::path dir = fresh_dir("pipe-stored");
  const fs::path out = dir / "out";
  const std::string cand_path = (dir / "candidates.jsonl").string();
  write_candidates_jsonl(cand_path, p.sources, p.lists);
  put(dir / "refs.m2", serialize_m2(p.refs));

  nlohmann::ordered_json cfg;
  cfg["candidates"] = cand_path;
  cfg["refs"] = (dir / "refs.m2").string();
  cfg["out"] = out.string();
  cfg["k"] = 3;
  cfg["tau"] = 2;
  cfg["decoding"] = "vote";
  cfg["metric"] = "errant-f05";
  put(dir / "config.json", cfg.dump(2));

  std::ostringstream diag;
  const int code = run_pipeline((dir / "config.json").string(), diag);
  CHECK(code == 0);
  CHECK(diag.str().empty());

  CHECK(slurp(out / "corrected.txt") ==
        "A b c d e\nA b c d e\nA b c d e\n");

  const auto accepted = parse_m2(slurp(out / "accepted.m2"));
  REQUIRE(accepted.size() == 3);
  for (const AnnotationSet& block : accepted) {
    REQUIRE(block.annotations.count(0));
    const EditSet& edits = block.annotations.at(0);
    REQUIRE(edits.edits.size() == 1);
    CHECK(edits.edits[0] == Edit{0, 1, {"A"}, ""});
  }

  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.at("metric") == "errant-f05");
  CHECK(report.at("f05") == 1.0);
  CHECK(report.at("tp") == 3);

  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("mode") == "stored");
  CHECK(manifest.at("complete") == true);
  CHECK(manifest.at("candidates_path") == cand_path);
  CHECK(manifest.at("decoding") == "vote");
  CHECK(manifest.at("k") == 3);
  CHECK(manifest.at("tau") == 2);
  CHECK(manifest.at("strategy") == "merge-adjacent");

  const std::string first_corrected = slurp(out / "corrected.txt");
  const std::string first_m2 = slurp(out / "accepted.m2");
  const std::string first_report = slurp(out / "report.json");
  const std::string first_manifest = slurp(out / "manifest.json");
  const std::string first_candidates = slurp(out / "candidates.jsonl");

  std::ostringstream diag2;
  CHECK(run_pipeline((dir / "config.json").string(), diag2) == 0);
  CHECK(slurp(out / "corrected.txt") == first_corrected);
  CHECK(slurp(out / "accepted.m2") == first_m2);
  CHECK(slurp(out / "report.json") == first_report);
  CHECK(slurp(out / "manifest.json") == first_manifest);
  CHECK(slurp(out / "candidates.jsonl") == first_candidates);
}

TEST_CASE("a missing candidates file exits with code 2 and names the path") {
  const fs::path dir = fresh_dir("pipe-missing");
  nlohmann::ordered_json cfg;
  cfg["candidates"] = (dir / "nowhere.jsonl").string();
  cfg["out"] = (dir / "out").string();
  put(dir / "config.json", cfg.dump(2));

  std::ostringstream diag;
  const int code = run_pipeline((dir / "config.json").string(), diag);
  CHECK(code == 2);
  const auto record = nlohmann::json::parse(diag.str());
  CHECK(record.at("error").at("type") == "missing-file");
  CHECK(record.at("error").at("path") == (dir / "nowhere.jsonl").string());
  CHECK(record.at("error").at("message").get<std::string>().find(
            "nowhere.jsonl") != std::string::npos);
}

TEST_CASE("voting trims the over-corrections greedy decoding keeps") {
  // First candidate: right fix plus a spurious edit. The other two repeat
  // only the right fix.
  std::vector<AnnotationSet> refs;
  std::vector<TokenSeq> sources;
  std::vector<std::vector<TokenSeq>> lists;
  for (int s = 0; s < 3; ++s) {
    refs.push_back(ref_with_edit("a b c d e", Edit{0, 1, {"A"}, ""}));
    sources.push_back(refs.back().source);
    lists.push_back({tokenize("A b x d e"), tokenize("A b c d e"),
                     tokenize("A b c d e")});
  }

  const fs::path dir = fresh_dir("pipe-greedy-vote");
  const std::string cand_path = (dir / "candidates.jsonl").string();
  write_candidates_jsonl(cand_path, sources, lists);
  put(dir / "refs.m2", serialize_m2(refs));

  const auto run = [&](const std::string& decoding, int tau,
                       const fs::path& out) {
    nlohmann::ordered_json cfg;
    cfg["candidates"] = cand_path;
    cfg["refs"] = (dir / "refs.m2").string();
    cfg["out"] = out.string();
    cfg["tau"] = tau;
    cfg["decoding"] = decoding;
    const fs::path cfg_path = dir / (decoding + "-config.json");
    put(cfg_path, cfg.dump(2));
    std::ostringstream diag;
    REQUIRE(run_pipeline(cfg_path.string(), diag) == 0);
  };

  run("greedy", 1, dir / "greedy-out");
  run("vote", 2, dir / "vote-out");

  const auto count_edits_in = [](const std::string& m2_text) {
    std::size_t edits = 0;
    for (const AnnotationSet& block : parse_m2(m2_text))
      for (const auto& [annotator, set] : block.annotations)
        edits += set.edits.size();
    return edits;
  };
  const std::size_t greedy_edits =
      count_edits_in(slurp(dir / "greedy-out" / "accepted.m2"));
  const std::size_t vote_edits =
      count_edits_in(slurp(dir / "vote-out" / "accepted.m2"));
  CHECK(greedy_edits == 6);
  CHECK(vote_edits == 3);
  CHECK(vote_edits < greedy_edits);

  const auto greedy_report =
      nlohmann::json::parse(slurp(dir / "greedy-out" / "report.json"));
  const auto vote_report =
      nlohmann::json::parse(slurp(dir / "vote-out" / "report.json"));
  CHECK(vote_report.at("f05").get<double>() >
        greedy_report.at("f05").get<double>());
  CHECK(slurp(dir / "vote-out" / "corrected.txt") ==
        "A b c d e\nA b c d e\nA b c d e\n");
}

TEST_CASE("mbr decoding picks the majority candidate") {
  const fs::path dir = fresh_dir("pipe-mbr");
  const std::vector<TokenSeq> sources = {tokenize("a b c d")};
  const std::vector<std::vector<TokenSeq>> lists = {
      {tokenize("a b c y"), tokenize("x b c d"), tokenize("x b c d")}};
  write_candidates_jsonl((dir / "c.jsonl").string(), sources, lists);

  nlohmann::ordered_json cfg;
  cfg["candidates"] = (dir / "c.jsonl").string();
  cfg["out"] = (dir / "out").string();
  cfg["decoding"] = "mbr";
  cfg["utility"] = "edit-f05";
  put(dir / "config.json", cfg.dump(2));

  std::ostringstream diag;
  REQUIRE(run_pipeline((dir / "config.json").string(), diag) == 0);
  CHECK(slurp(dir / "out" / "corrected.txt") == "x b c d\n");
  const auto accepted = parse_m2(slurp(dir / "out" / "accepted.m2"));
  REQUIRE(accepted.size() == 1);
  CHECK(accepted[0].annotations.at(0).edits.size() == 1);
  // No refs configured: no report.
  CHECK(!fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("the pipeline scores with GLEU when asked") {
  const Planted p = make_planted();
  const fs::path dir = fresh_dir("pipe-gleu");
  write_candidates_jsonl((dir / "c.jsonl").string(), p.sources, p.lists);
  put(dir / "refs.m2", serialize_m2(p.refs));

  nlohmann::ordered_json cfg;
  cfg["candidates"] = (dir / "c.jsonl").string();
  cfg["refs"] = (dir / "refs.m2").string();
  cfg["out"] = (dir / "out").string();
  cfg["tau"] = 2;
  cfg["metric"] = "gleu";
  cfg["gleu"] = {{"iterations", 10}, {"seed", 7}};
  put(dir / "config.json", cfg.dump(2));

  std::ostringstream diag;
  REQUIRE(run_pipeline((dir / "config.json").string(), diag) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
  CHECK(report.at("metric") == "gleu");
  CHECK(report.at("iterations") == 10);
  CHECK(report.at("seed") == 7);

  // Voted output equals every annotator reference, so the score is exact.
  CHECK(report.at("score") == 1.0);
}

TEST_CASE("generation pipelines reuse matching candidate sets") {
  setenv("GECVOTE_API_KEY", "test-key-123", 1);
  MockServer mock;
  std::atomic<int> hits{0};
  mock.srv.Post("/chat/completions", [&](const httplib::Request& req,
                                         httplib::Response& res) {
    hits.fetch_add(1);
    const int n = nlohmann::json::parse(req.body).at("n").get<int>();
    res.set_content(n_choices("A b", n), "application/json");
  });
  mock.start();

  const fs::path dir = fresh_dir("pipe-gen");
  put(dir / "sources.txt", "a b\n");

  nlohmann::ordered_json cfg;
  cfg["sources"] = (dir / "sources.txt").string();
  cfg["out"] = (dir / "out").string();
  cfg["tau"] = 1;
  cfg["generation"] = {
      {"endpoint", mock.endpoint()}, {"model", "mock"},
      {"template", "tool-en"},       {"n", 2},
      {"max_retries", 1},            {"retry_backoff_ms", 1},
  };
  put(dir / "config.json", cfg.dump(2));

  std::ostringstream diag;
  REQUIRE(run_pipeline((dir / "config.json").string(), diag) == 0);
  const int first_hits = hits.load();
  CHECK(first_hits == 1);

  const CandidateCorpus corpus =
      read_candidates_jsonl((dir / "out" / "candidates.jsonl").string());
  REQUIRE(corpus.candidates.size() == 1);
  CHECK(corpus.candidates[0].size() == 2);
  CHECK(corpus.candidates[0][0] == tokenize("A b"));
  const RunManifest manifest =
      read_manifest((dir / "out" / "manifest.json").string());
  CHECK(manifest.complete);
  CHECK(manifest.template_id == "tool-en");
  CHECK(manifest.n == 2);
  CHECK(slurp(dir / "out" / "corrected.txt") == "A b\n");

  // Second run with the same parameters never touches the endpoint.
  const std::string manifest_bytes = slurp(dir / "out" / "manifest.json");
  std::ostringstream diag2;
  REQUIRE(run_pipeline((dir / "config.json").string(), diag2) == 0);
  CHECK(hits.load() == first_hits);
  CHECK(slurp(dir / "out" / "manifest.json") == manifest_bytes);

  // Changing a generation parameter invalidates the reuse.
  cfg["generation"]["model"] = "mock-2";
  put(dir / "config.json", cfg.dump(2));
  std::ostringstream diag3;
  REQUIRE(run_pipeline((dir / "config.json").string(), diag3) == 0);
  CHECK(hits.load() == first_hits + 1);
}

TEST_CASE("a failing endpoint flushes partial results and exits 1") {
  setenv("GECVOTE_API_KEY", "test-key-123", 1);
  MockServer mock;
  mock.srv.Post("/chat/completions", [&](const httplib::Request& req,
                                         httplib::Response& res) {
    const std::string prompt = prompt_of(req);
    const int n = nlohmann::json::parse(req.body).at("n").get<int>();
    if (prompt.find("s1 breaks") != std::string::npos) {
      res.status = 500;
      return;
    }
    res.set_content(n_choices("fixed", n), "application/json");
  });
  mock.start();

  const fs::path dir = fresh_dir("pipe-partial");
  put(dir / "sources.txt", "s0 fine\ns1 breaks\n");

  nlohmann::ordered_json cfg;
  cfg["sources"] = (dir / "sources.txt").string();
  cfg["out"] = (dir / "out").string();
  cfg["generation"] = {
      {"endpoint", mock.endpoint()},  {"model", "mock"},
      {"template", "tool-en"},        {"n", 2},
      {"max_retries", 0},             {"retry_backoff_ms", 1},
      {"max_in_flight", 1},
  };
  put(dir / "config.json", cfg.dump(2));

  std::ostringstream diag;
  const int code = run_pipeline((dir / "config.json").string(), diag);
  CHECK(code == 1);
  const auto record = nlohmann::json::parse(diag.str());
  CHECK(record.at("error").at("type") == "endpoint");

  const RunManifest manifest =
      read_manifest((dir / "out" / "manifest.json").string());
  CHECK(!manifest.complete);
  REQUIRE(manifest.failed_index.has_value());
  CHECK(*manifest.failed_index == 1);
  CHECK(!manifest.error.empty());

  // The flushed JSONL holds only the finished slot, keeping its idx.
  const std::string partial = slurp(dir / "out" / "candidates.jsonl");
  const auto line = nlohmann::json::parse(partial);
  CHECK(line.at("idx") == 0);
  CHECK(line.at("source") == "s0 fine");
  CHECK(partial.find("s1") == std::string::npos);
}

TEST_CASE("pipeline configuration failures are classified") {
  const fs::path dir = fresh_dir("pipe-errors");

  // Config file that is not JSON.
  put(dir / "bad.json", "{nope");
  std::ostringstream diag1;
  CHECK(run_pipeline((dir / "bad.json").string(), diag1) == 1);
  CHECK(nlohmann::json::parse(diag1.str()).at("error").at("type") ==
        "config");

  // Missing config file.
  std::ostringstream diag2;
  CHECK(run_pipeline((dir / "absent.json").string(), diag2) == 1);
  CHECK(nlohmann::json::parse(diag2.str()).at("error").at("type") == "io");

  // Neither candidates nor generation.
  nlohmann::ordered_json cfg;
  cfg["out"] = (dir / "out").string();
  put(dir / "neither.json", cfg.dump(2));
  std::ostringstream diag3;
  CHECK(run_pipeline((dir / "neither.json").string(), diag3) == 1);
  CHECK(nlohmann::json::parse(diag3.str()).at("error").at("type") ==
        "config");

  // Stored candidates with a disagreeing sources file.
  const std::vector<TokenSeq> sources = {tokenize("a b")};
  const std::vector<std::vector<TokenSeq>> lists = {{tokenize("a b")}};
  write_candidates_jsonl((dir / "c.jsonl").string(), sources, lists);
  put(dir / "other-sources.txt", "something else\n");
  nlohmann::ordered_json mismatch;
  mismatch["candidates"] = (dir / "c.jsonl").string();
  mismatch["sources"] = (dir / "other-sources.txt").string();
  mismatch["out"] = (dir / "out").string();
  put(dir / "mismatch.json", mismatch.dump(2));
  std::ostringstream diag4;
  CHECK(run_pipeline((dir / "mismatch.json").string(), diag4) == 1);
  CHECK(nlohmann::json::parse(diag4.str()).at("error").at("type") == "data");

  // Reference corpus with a different source line.
  put(dir / "refs.m2", "S not the same\n");
  nlohmann::ordered_json badref;
  badref["candidates"] = (dir / "c.jsonl").string();
  badref["refs"] = (dir / "refs.m2").string();
  badref["out"] = (dir / "out").string();
  put(dir / "badref.json", badref.dump(2));
  std::ostringstream diag5;
  CHECK(run_pipeline((dir / "badref.json").string(), diag5) == 1);
  CHECK(nlohmann::json::parse(diag5.str()).at("error").at("type") == "data");

  // k wider than the stored candidate lists.
  nlohmann::ordered_json widek;
  widek["candidates"] = (dir / "c.jsonl").string();
  widek["out"] = (dir / "out").string();
  widek["k"] = 5;
  put(dir / "widek.json", widek.dump(2));
  std::ostringstream diag6;
  CHECK(run_pipeline((dir / "widek.json").string(), diag6) == 1);
  CHECK(nlohmann::json::parse(diag6.str()).at("error").at("type") == "data");
}

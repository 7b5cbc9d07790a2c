#include "gecvote/generation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace gecvote {

namespace {

// Scans body[pos] == '[' for an uppercase placeholder; returns its name and
// advances pos past ']' on success. Anything else starting with '[' is
// literal text.
bool scan_placeholder(const std::string& body, std::size_t& pos,
                      std::string& name) {
  std::size_t i = pos + 1;
  while (i < body.size() && body[i] >= 'A' && body[i] <= 'Z') ++i;
  if (i == pos + 1 || i >= body.size() || body[i] != ']') return false;
  name = body.substr(pos + 1, i - pos - 1);
  pos = i + 1;
  return true;
}

}  // namespace

PromptTemplate make_template(const std::string& id, const std::string& body) {
  int source = 0, fewshot = 0, lang = 0;
  std::size_t pos = 0;
  while (pos < body.size()) {
    if (body[pos] != '[') {
      ++pos;
      continue;
    }
    std::string name;
    if (!scan_placeholder(body, pos, name)) {
      ++pos;
      continue;
    }
    if (name == "SOURCE")
      ++source;
    else if (name == "FEWSHOT")
      ++fewshot;
    else if (name == "LANG")
      ++lang;
    else
      throw TemplateError("template '" + id + "': unknown placeholder [" +
                          name + "]");
  }
  if (source != 1)
    throw TemplateError("template '" + id + "': [SOURCE] must appear exactly once");
  if (fewshot != 1)
    throw TemplateError("template '" + id + "': [FEWSHOT] must appear exactly once");
  if (lang > 1)
    throw TemplateError("template '" + id + "': [LANG] may appear at most once");
  return {id, body};
}

namespace {

const char* const kToolEnBody =
    "You are a grammatical error correction tool. Your task is to correct "
    "the grammaticality and spelling in the input sentence. Make the "
    "smallest possible change in order to make the sentence grammatically "
    "correct. Change as few words as possible. Do not rephrase parts of the "
    "sentence that are already grammatical. Do not change the meaning of "
    "the sentence by adding or removing information. If the sentence is "
    "already grammatically correct, you should output the original sentence "
    "without changing anything. Return only the corrected text and nothing "
    "more.\n[FEWSHOT]\nInput sentence: [SOURCE]\nOutput sentence:";

const char* const kToolMultilingualBody =
    "You are a grammatical error correction tool. Your task is to correct "
    "the grammaticality and spelling of the input essay written by a "
    "learner of [LANG]. Make the smallest possible change in order to make "
    "the essay grammatically correct. Change as few words as possible. Do "
    "not rephrase parts of the essay that are already grammatical. Do not "
    "change the meaning of the essay by adding or removing information. If "
    "the essay is already grammatically correct, you should output the "
    "original essay without changing anything. Return only the corrected "
    "text and nothing more.\n[FEWSHOT]\nInput sentence: [SOURCE]\nOutput "
    "sentence:";

}  // namespace

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> templates = [] {
    std::vector<PromptTemplate> t;
    t.push_back(make_template("tool-en", kToolEnBody));
    t.push_back(make_template("tool-multilingual", kToolMultilingualBody));
    t.push_back(make_template("sweep-1", kToolEnBody));
    t.push_back(make_template(
        "sweep-2",
        "Make minimal changes to the following text such that it is "
        "grammatically correct. Return only the corrected text and nothing "
        "more.\n[FEWSHOT]\nInput sentence: [SOURCE]\nOutput sentence:"));
    t.push_back(make_template(
        "sweep-3",
        "Please correct the following text. Do not attempt to rewrite it "
        "into perfect English or to interpret the text. Often, things could "
        "be expressed better by paraphrase, but the task is to make minimal "
        "changes to correct the text. Do not change anything that is "
        "correct. Please make no changes if there are no errors. Return "
        "only the corrected text and nothing more.\n[FEWSHOT]\nInput "
        "sentence: [SOURCE]\nOutput sentence:"));
    t.push_back(make_template(
        "sweep-4",
        "Reply with a corrected version of the input sentence with all "
        "grammatical and spelling errors fixed. If there are no errors, "
        "reply with a copy of the original sentence. Return only the "
        "corrected text and nothing more.\n[FEWSHOT]\nInput sentence: "
        "[SOURCE]\nOutput sentence:"));
    t.push_back(make_template(
        "sweep-5",
        "Correct the grammatical errors in the following sentence. Return "
        "only the corrected text and nothing more.\n[FEWSHOT]\n[SOURCE]; "
        "output:"));
    t.push_back(make_template(
        "sweep-6",
        "Revise mistakes in this text. Return only the corrected text and "
        "nothing more.\n[FEWSHOT]\n[SOURCE]; output:"));
    t.push_back(make_template(
        "sweep-7",
        "Rewrite the following text with proper grammar. Return only the "
        "corrected text and nothing more.\n[FEWSHOT]\n[SOURCE]; output:"));
    t.push_back(make_template(
        "sweep-8",
        "Improve the grammar of this text. Return only the corrected text "
        "and nothing more.\n[FEWSHOT]\nInput sentence: [SOURCE]\nOutput "
        "sentence:"));
    t.push_back(make_template(
        "sweep-9",
        "Correct the following to standard English. Return only the "
        "corrected text and nothing more.\n[FEWSHOT]\nSentence: "
        "[SOURCE]\nCorrection:"));
    t.push_back(make_template(
        "sweep-10",
        "Fix the errors in this sentence. Return only the corrected text "
        "and nothing more.\n[FEWSHOT]\nInput sentence: [SOURCE]\nOutput "
        "sentence:"));
    return t;
  }();
  return templates;
}

const PromptTemplate& find_template(const std::string& id) {
  for (const PromptTemplate& t : builtin_templates())
    if (t.id == id) return t;
  throw ConfigError("unknown template '" + id + "'");
}

FewShotSet select_fewshot_middle(
    const std::vector<std::pair<std::string, std::string>>& corpus,
    std::size_t m) {
  if (corpus.size() < m)
    throw InsufficientDataError("need " + std::to_string(m) +
                                " few-shot pairs, corpus has " +
                                std::to_string(corpus.size()));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> lengths(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    lengths[i] = utf8_length(corpus[i].first);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lengths[a] != lengths[b]) return lengths[a] < lengths[b];
    if (corpus[a].first != corpus[b].first)
      return corpus[a].first < corpus[b].first;
    return a < b;
  });
  FewShotSet set;
  const std::size_t start = (corpus.size() - m) / 2;
  for (std::size_t i = start; i < start + m; ++i)
    set.pairs.push_back(corpus[order[i]]);
  return set;
}

std::string render_prompt(const PromptTemplate& tmpl, const FewShotSet& fewshot,
                          const TokenSeq& source,
                          const std::optional<std::string>& language) {
  std::string fewshot_block;
  for (std::size_t i = 0; i < fewshot.pairs.size(); ++i) {
    if (i > 0) fewshot_block += '\n';
    fewshot_block += "Input sentence: " + fewshot.pairs[i].first +
                     "\nOutput sentence: " + fewshot.pairs[i].second;
  }

  std::string out;
  out.reserve(tmpl.body.size() + fewshot_block.size());
  std::size_t pos = 0;
  while (pos < tmpl.body.size()) {
    if (tmpl.body[pos] != '[') {
      out += tmpl.body[pos++];
      continue;
    }
    std::string name;
    const std::size_t at = pos;
    if (!scan_placeholder(tmpl.body, pos, name)) {
      out += tmpl.body[pos++];
      continue;
    }
    if (name == "SOURCE") {
      out += join_tokens(source);
    } else if (name == "FEWSHOT") {
      out += fewshot_block;
    } else if (name == "LANG") {
      if (!language)
        throw TemplateError("template '" + tmpl.id +
                            "' uses [LANG] but no language was given");
      out += *language;
    } else {
      throw TemplateError("template '" + tmpl.id + "': unknown placeholder [" +
                          name + "] at offset " + std::to_string(at));
    }
  }
  return out;
}

namespace {

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void validate_config(const GenConfig& config) {
  if (config.endpoint.empty()) throw ConfigError("endpoint is required");
  if (config.model.empty()) throw ConfigError("model is required");
  if (config.n < 1) throw ConfigError("n must be >= 1");
  if (config.temperature < 0.0)
    throw ConfigError("temperature must be >= 0");
  if (!(config.top_p > 0.0) || config.top_p > 1.0)
    throw ConfigError("top_p must be in (0, 1]");
  if (config.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (config.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (config.max_in_flight < 1)
    throw ConfigError("max_in_flight must be >= 1");
}

// {endpoint}/chat/completions, split into the client base and request path.
void split_endpoint(const std::string& endpoint, std::string& base,
                    std::string& path) {
  std::string url = endpoint;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const std::size_t scheme = url.find("://");
  const std::size_t slash =
      scheme == std::string::npos ? url.find('/') : url.find('/', scheme + 3);
  if (slash == std::string::npos) {
    base = url;
    path = "/chat/completions";
  } else {
    base = url.substr(0, slash);
    path = url.substr(slash) + "/chat/completions";
  }
}

struct Slot {
  std::vector<TokenSeq> candidates;
  bool ok = false;
  bool attempted = false;
  bool auth_rejected = false;
  std::string error;
};

struct RequestOutcome {
  bool ok = false;
  bool auth_rejected = false;
  std::string error;
  std::vector<std::string> completions;
};

// One logical request (n completions), retried through transient failures:
// connection errors, timeouts, HTTP 429/5xx, and malformed bodies.
RequestOutcome post_once(httplib::Client& client, const std::string& path,
                         const httplib::Headers& headers,
                         const std::string& prompt, const GenConfig& config,
                         int n_choices) {
  nlohmann::json body{
      {"model", config.model},
      {"messages",
       nlohmann::json::array(
           {nlohmann::json{{"role", "user"}, {"content", prompt}}})},
      {"n", n_choices},
      {"temperature", config.temperature},
      {"top_p", config.top_p},
      {"max_tokens", config.max_tokens},
  };
  const std::string payload = body.dump();

  RequestOutcome outcome;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<long long>(config.retry_backoff_ms) << (attempt - 1)));
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      outcome.error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      outcome.auth_rejected = true;
      outcome.error = "credential rejected (HTTP " +
                      std::to_string(res->status) + ")";
      return outcome;
    }
    if (res->status == 429 || res->status >= 500) {
      outcome.error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      outcome.error = "HTTP " + std::to_string(res->status);
      return outcome;
    }
    try {
      const nlohmann::json parsed = nlohmann::json::parse(res->body);
      const auto& choices = parsed.at("choices");
      if (!choices.is_array() ||
          choices.size() != static_cast<std::size_t>(n_choices))
        throw std::runtime_error("expected " + std::to_string(n_choices) +
                                 " choices, got " +
                                 std::to_string(choices.size()));
      std::vector<std::string> completions;
      for (const auto& choice : choices)
        completions.push_back(
            choice.at("message").at("content").get<std::string>());
      outcome.ok = true;
      outcome.completions = std::move(completions);
      return outcome;
    } catch (const std::exception& e) {
      outcome.error = std::string("malformed response: ") + e.what();
      continue;
    }
  }
  return outcome;
}

}  // namespace

GenerationResult try_generate(const std::vector<TokenSeq>& sources,
                              const PromptTemplate& tmpl,
                              const FewShotSet& fewshot,
                              const GenConfig& config) {
  validate_config(config);
  const char* key = std::getenv("GECVOTE_API_KEY");
  if (key == nullptr || *key == '\0')
    throw AuthError("GECVOTE_API_KEY is not set");
  const httplib::Headers headers{
      {"Authorization", std::string("Bearer ") + key}};

  GenerationResult result;
  result.manifest.endpoint = config.endpoint;
  result.manifest.model = config.model;
  result.manifest.template_id = tmpl.id;
  result.manifest.template_body = tmpl.body;
  result.manifest.fewshot = fewshot.pairs;
  result.manifest.language = config.language;
  result.manifest.n = config.n;
  result.manifest.temperature = config.temperature;
  result.manifest.top_p = config.top_p;
  result.manifest.max_tokens = config.max_tokens;
  result.manifest.timestamp = utc_timestamp();
  result.candidates.resize(sources.size());

  // Prompts rendered up front: any TemplateError fires before the first
  // request goes out.
  std::vector<std::string> prompts;
  prompts.reserve(sources.size());
  for (const TokenSeq& source : sources)
    prompts.push_back(render_prompt(tmpl, fewshot, source, config.language));

  std::string base, path;
  split_endpoint(config.endpoint, base, path);

  std::vector<Slot> slots(sources.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    httplib::Client client(base);
    const auto sec = static_cast<time_t>(config.timeout_s);
    const auto usec = static_cast<time_t>(
        (config.timeout_s - static_cast<double>(sec)) * 1e6);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= sources.size()) break;
      Slot& slot = slots[i];
      slot.attempted = true;
      if (config.separate_requests) {
        for (int j = 0; j < config.n; ++j) {
          RequestOutcome outcome =
              post_once(client, path, headers, prompts[i], config, 1);
          if (!outcome.ok) {
            slot.auth_rejected = outcome.auth_rejected;
            slot.error = outcome.error;
            stop.store(true);
            return;
          }
          slot.candidates.push_back(tokenize(outcome.completions[0]));
        }
        slot.ok = true;
      } else {
        RequestOutcome outcome =
            post_once(client, path, headers, prompts[i], config, config.n);
        if (!outcome.ok) {
          slot.auth_rejected = outcome.auth_rejected;
          slot.error = outcome.error;
          stop.store(true);
          return;
        }
        for (const std::string& completion : outcome.completions)
          slot.candidates.push_back(tokenize(completion));
        slot.ok = true;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(
      1, std::min<std::size_t>(config.max_in_flight, sources.size()));
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  bool complete = true;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].auth_rejected) throw AuthError(slots[i].error);
    if (slots[i].ok) {
      result.candidates[i] = std::move(slots[i].candidates);
      continue;
    }
    complete = false;
    if (!slots[i].error.empty() && !result.manifest.failed_index) {
      result.manifest.failed_index = i;
      result.manifest.error = "source " + std::to_string(i) + ": " +
                              slots[i].error;
    }
  }
  if (!complete && !result.manifest.failed_index) {
    // Unreachable unless a worker died without recording anything.
    result.manifest.failed_index = 0;
    result.manifest.error = "generation aborted";
  }
  result.manifest.complete = complete;
  return result;
}

GenerationResult generate_candidates(const std::vector<TokenSeq>& sources,
                                     const PromptTemplate& tmpl,
                                     const FewShotSet& fewshot,
                                     const GenConfig& config) {
  GenerationResult result = try_generate(sources, tmpl, fewshot, config);
  if (!result.manifest.complete)
    throw EndpointError(result.manifest.failed_index.value_or(0),
                        result.manifest.error);
  return result;
}

}  // namespace gecvote

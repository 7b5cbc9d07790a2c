#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gecvote/errors.hpp"
#include "gecvote/text.hpp"

namespace gecvote {

// Prompt body with [SOURCE] and [FEWSHOT] placeholders, plus [LANG] in the
// multilingual variant.
struct PromptTemplate {
  std::string id;
  std::string body;
};

// Validates placeholder usage: [SOURCE] and [FEWSHOT] exactly once each,
// [LANG] at most once, any other [A-Z]+ bracket is a TemplateError.
PromptTemplate make_template(const std::string& id, const std::string& body);

// Shipped templates: "tool-en", "tool-multilingual", and "sweep-1" through
// "sweep-10" (sweep-1 repeats the tool-en body).
const std::vector<PromptTemplate>& builtin_templates();

// Looks up a built-in by id; throws ConfigError when absent.
const PromptTemplate& find_template(const std::string& id);

// (source sentence, corrected sentence) pairs, fixed for a whole run.
struct FewShotSet {
  std::vector<std::pair<std::string, std::string>> pairs;
};

// Sorts the corpus by source length in codepoints (ties: source text, then
// original index) and takes the m entries starting at floor((len - m) / 2).
// Throws InsufficientDataError when the corpus is smaller than m.
FewShotSet select_fewshot_middle(
    const std::vector<std::pair<std::string, std::string>>& corpus,
    std::size_t m);

// Substitutes the placeholders: [FEWSHOT] becomes newline-joined
// "Input sentence: {src}\nOutput sentence: {ref}" blocks, [SOURCE] the
// space-joined source, [LANG] the language name. Throws TemplateError on an
// unknown placeholder or when [LANG] appears without a language.
std::string render_prompt(const PromptTemplate& tmpl, const FewShotSet& fewshot,
                          const TokenSeq& source,
                          const std::optional<std::string>& language = {});

struct GenConfig {
  std::string endpoint;  // base URL; requests go to {endpoint}/chat/completions
  std::string model;
  int n = 8;                 // candidates per source
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 256;
  std::optional<std::string> language;  // fills [LANG]
  double timeout_s = 120.0;
  int max_retries = 3;       // extra attempts after the first
  int max_in_flight = 4;
  int retry_backoff_ms = 250;  // doubled per retry
  bool separate_requests = false;  // n single-choice requests per source
};

// Everything needed to re-issue the identical request set, plus the outcome.
struct RunManifest {
  std::string endpoint;
  std::string model;
  std::string template_id;
  std::string template_body;
  std::vector<std::pair<std::string, std::string>> fewshot;
  std::optional<std::string> language;
  int n = 0;
  double temperature = 0.0;
  double top_p = 0.0;
  int max_tokens = 0;
  std::string timestamp;  // ISO 8601 UTC, set when the run starts
  bool complete = false;
  std::optional<std::size_t> failed_index;  // lowest failed source index
  std::string error;                        // empty when complete
};

struct GenerationResult {
  // candidates[i] belongs to sources[i]; on an incomplete run the slots at
  // and after the failure may be empty.
  std::vector<std::vector<TokenSeq>> candidates;
  RunManifest manifest;
};

// Issues one chat-completion request per source (n completions each, or n
// single-completion requests with separate_requests), whitespace-tokenizes
// every completion in full, and preserves source order. Transient failures
// (HTTP 429/5xx, timeouts, malformed bodies) are retried with exponential
// backoff up to max_retries. Throws ConfigError on invalid config and
// AuthError when GECVOTE_API_KEY is unset or the endpoint rejects it;
// on retry exhaustion it returns normally with manifest.complete == false
// and manifest.failed_index set so callers can flush partial results.
GenerationResult try_generate(const std::vector<TokenSeq>& sources,
                              const PromptTemplate& tmpl,
                              const FewShotSet& fewshot,
                              const GenConfig& config);

// try_generate with the strict contract: throws EndpointError (carrying the
// failed index) instead of returning an incomplete result.
GenerationResult generate_candidates(const std::vector<TokenSeq>& sources,
                                     const PromptTemplate& tmpl,
                                     const FewShotSet& fewshot,
                                     const GenConfig& config);

}  // namespace gecvote

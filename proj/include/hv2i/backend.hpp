#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hv2i/highway.hpp"
#include "hv2i/llm_policy.hpp"

namespace hv2i::llm {

// Text-generation endpoint used by decide(). Implementations throw
// BackendError on failure.
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string complete(const PromptBundle& prompt) = 0;
};

enum class BackendKind { kHttpChat, kScripted };

struct BackendConfig {
  BackendKind kind = BackendKind::kScripted;
  std::string script = "heuristic";  // scripted: heuristic | idle | <ACTION NAME>
  std::string endpoint = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "llama3.1-8b";
  double temperature = 0.0;
  double timeout_s = 30.0;
  int max_retries = 2;
  double retry_backoff_s = 0.5;
  int max_tokens = 64;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string system_prompt = "You are a careful autonomous driving assistant.";
  std::uint64_t seed = 0;  // forwarded as the request "seed"; set from the campaign

  void validate() const;
};

// Pure function of the prompt bundle, for offline and test use.
class ScriptedBackend : public TextBackend {
 public:
  using Script = std::function<std::string(const PromptBundle&)>;
  explicit ScriptedBackend(Script script) : script_(std::move(script)) {}
  std::string complete(const PromptBundle& prompt) override { return script_(prompt); }

 private:
  Script script_;
};

// Rule-based stand-in for the language model: keep a safe gap, overtake on
// the left when blocked, return to the right-most lane when clear, and
// otherwise speed up.
highway::AdAction heuristic_driving_action(const highway::AdObservation& state,
                                           const highway::RoadConfig& road);
std::unique_ptr<TextBackend> make_heuristic_backend(const highway::RoadConfig& road);
std::unique_ptr<TextBackend> make_constant_backend(std::string response);

// OpenAI-compatible POST /v1/chat/completions client with timeout and
// bounded retries (network errors, HTTP 429 and 5xx). Bearer token is read
// from the environment variable named in the config, if set.
class HttpChatBackend : public TextBackend {
 public:
  explicit HttpChatBackend(BackendConfig config);
  std::string complete(const PromptBundle& prompt) override;

  // Request body for one prompt (exposed for tests).
  std::string request_body(const std::string& prompt_text) const;
  // choices[0].message.content, or BackendError.
  static std::string extract_content(std::string_view response_body);

 private:
  BackendConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

// Serves recorded responses in order; throws BackendError once exhausted.
// A recorded failure (empty response with an error) is replayed as a
// BackendError carrying the recorded message.
class ReplayBackend : public TextBackend {
 public:
  explicit ReplayBackend(std::vector<std::string> responses, std::vector<std::string> errors = {});
  // Reads `response` / `error` fields from a JSONL fixture or decision trace.
  static ReplayBackend from_jsonl(const std::filesystem::path& path);
  std::string complete(const PromptBundle& prompt) override;
  std::size_t remaining() const { return responses_.size() - next_; }

 private:
  std::vector<std::string> responses_;
  std::vector<std::string> errors_;  // parallel to responses_, empty when the call succeeded
  std::size_t next_ = 0;
};

// Forwards to `inner` and appends {prompt_hash, response} JSONL rows;
// backend failures are appended as {prompt_hash, error} and rethrown.
class RecordingBackend : public TextBackend {
 public:
  RecordingBackend(TextBackend& inner, std::filesystem::path fixture);
  std::string complete(const PromptBundle& prompt) override;

 private:
  TextBackend& inner_;
  std::filesystem::path fixture_;
};

std::unique_ptr<TextBackend> make_backend(const BackendConfig& config,
                                          const highway::RoadConfig& road);

}  // namespace hv2i::llm

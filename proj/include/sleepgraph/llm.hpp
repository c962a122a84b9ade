#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sleepgraph {

struct LlmRequest {
  std::string system_text;
  std::string user_text;  // non-empty
  std::string model_name = "gpt-4";
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct LlmResponse {
  std::string text;  // verbatim apart from trailing whitespace
  std::string backend_id;
  std::int64_t latency_ms = 0;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual LlmResponse complete(const LlmRequest& req) const = 0;
  virtual std::string id() const = 0;
};

/// Throws InvalidConfig for an empty user text or negative temperature.
void validate_request(const LlmRequest& req);

/// `{model, messages: [{role: system}, {role: user}], temperature, max_tokens}`.
nlohmann::ordered_json chat_request_json(const LlmRequest& req);
/// First choice's message content. Throws MalformedResponse.
std::string extract_chat_text(std::string_view body);

struct HttpBackendConfig {
  std::string endpoint_url;  // e.g. https://api.openai.com/v1/chat/completions
  std::string api_key;       // sent as a bearer token, never logged
  std::string model = "gpt-4";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};
  std::size_t max_in_flight = 4;
  std::uint64_t jitter_seed = 0;
  /// Backoff sleeper; tests substitute a recorder.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// Chat-completions client. Retries HTTP 429 and 5xx up to `max_retries`
/// times with exponential backoff (base * 2^attempt, plus up to 50% jitter).
class HttpChatBackend final : public LlmBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig cfg);

  LlmResponse complete(const LlmRequest& req) const override;
  std::string id() const override { return "http:" + cfg_.model; }

 private:
  std::chrono::milliseconds backoff(int attempt) const;

  HttpBackendConfig cfg_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  mutable std::mutex jitter_mutex_;
  mutable std::mt19937_64 jitter_rng_;
};

/// Deterministic text derived from a stable hash of (system, user, seed).
class HashMockBackend final : public LlmBackend {
 public:
  explicit HashMockBackend(std::uint64_t seed = 0) : seed_(seed) {}
  LlmResponse complete(const LlmRequest& req) const override;
  std::string id() const override { return "mock-hash"; }

 private:
  std::uint64_t seed_;
};

/// Marker line emitted per prompt section: "[section: <label>]".
std::string section_marker(std::string_view label);
/// Number of marker lines in `text`.
std::size_t count_section_markers(std::string_view text);

/// Mock insight generator: echoes one marker line for every "## <label>"
/// section header in the user text, followed by a hash-derived sentence.
class MarkerInsightBackend final : public LlmBackend {
 public:
  explicit MarkerInsightBackend(std::uint64_t seed = 0) : seed_(seed) {}
  LlmResponse complete(const LlmRequest& req) const override;
  std::string id() const override { return "mock-marker"; }

 private:
  std::uint64_t seed_;
};

/// Mock evaluator: with m marker lines in the user text, replies
/// personalization = clamp(2m, 0, 10) and clamp(4 + m, 0, 10) for the other
/// three criteria, as strict JSON.
class MarkerEvaluatorBackend final : public LlmBackend {
 public:
  LlmResponse complete(const LlmRequest& req) const override;
  std::string id() const override { return "mock-marker-evaluator"; }
};

/// Replays fixed replies in order, repeating the last one.
class CannedBackend final : public LlmBackend {
 public:
  explicit CannedBackend(std::vector<std::string> replies);
  LlmResponse complete(const LlmRequest& req) const override;
  std::string id() const override { return "canned"; }
  std::size_t calls() const;

 private:
  std::vector<std::string> replies_;
  mutable std::mutex mutex_;
  mutable std::size_t calls_ = 0;
};

}  // namespace sleepgraph

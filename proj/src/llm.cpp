#include "sleepgraph/llm.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "http_util.hpp"
#include "sleepgraph/error.hpp"
#include "sleepgraph/hash.hpp"

namespace sleepgraph {

namespace {

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\n' || s.back() == '\r' || s.back() == '\t'))
    s.pop_back();
  return s;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t request_hash(const LlmRequest& req, std::uint64_t seed) {
  std::uint64_t h = fnv1a64(req.system_text);
  h = hash_combine(h, fnv1a64(req.user_text));
  return hash_combine(h, seed);
}

}  // namespace

void validate_request(const LlmRequest& req) {
  if (req.user_text.empty()) throw Error(Errc::InvalidConfig, "LLM request with empty user text");
  if (!(req.temperature >= 0.0)) throw Error(Errc::InvalidConfig, "temperature must be >= 0");
  if (req.max_tokens <= 0) throw Error(Errc::InvalidConfig, "max_tokens must be positive");
}

nlohmann::ordered_json chat_request_json(const LlmRequest& req) {
  nlohmann::ordered_json j;
  j["model"] = req.model_name;
  j["messages"] = nlohmann::ordered_json::array(
      {nlohmann::ordered_json{{"role", "system"}, {"content", req.system_text}},
       nlohmann::ordered_json{{"role", "user"}, {"content", req.user_text}}});
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  return j;
}

std::string extract_chat_text(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::MalformedResponse, "response body is not JSON");
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw Error(Errc::MalformedResponse, "response has no choices");
  const auto& first = j["choices"][0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object() ||
      !first["message"].contains("content") || !first["message"]["content"].is_string())
    throw Error(Errc::MalformedResponse, "first choice has no message content");
  return first["message"]["content"].get<std::string>();
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig cfg)
    : cfg_(std::move(cfg)), jitter_rng_(cfg_.jitter_seed) {
  detail::split_url(cfg_.endpoint_url);
  if (cfg_.max_in_flight == 0) throw Error(Errc::InvalidConfig, "max_in_flight must be >= 1");
  if (cfg_.max_retries < 0) throw Error(Errc::InvalidConfig, "max_retries must be >= 0");
  in_flight_ = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(cfg_.max_in_flight));
  if (!cfg_.sleep) cfg_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::chrono::milliseconds HttpChatBackend::backoff(int attempt) const {
  const auto base = cfg_.backoff_base.count() * (std::int64_t{1} << attempt);
  std::lock_guard lock(jitter_mutex_);
  std::uniform_real_distribution<double> jitter(0.0, 0.5);
  return std::chrono::milliseconds(base + static_cast<std::int64_t>(static_cast<double>(base) * jitter(jitter_rng_)));
}

LlmResponse HttpChatBackend::complete(const LlmRequest& req) const {
  validate_request(req);
  auto request = req;
  if (request.model_name.empty()) request.model_name = cfg_.model;
  const auto body = chat_request_json(request).dump();
  const auto parts = detail::split_url(cfg_.endpoint_url);

  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{*in_flight_};

  const auto started = std::chrono::steady_clock::now();
  httplib::Client client(parts.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(parts.path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      spdlog::warn("llm {}: request to {} failed: {}", id(), cfg_.endpoint_url, httplib::to_string(err));
      if (err == httplib::Error::Read || err == httplib::Error::Write ||
          err == httplib::Error::ConnectionTimeout)
        throw Error(Errc::Timeout, cfg_.endpoint_url + " after " + std::to_string(cfg_.timeout.count()) + " ms");
      throw Error(Errc::BackendUnavailable, cfg_.endpoint_url + ": " + httplib::to_string(err));
    }
    const int status = res->status;
    spdlog::debug("llm {}: POST {} attempt {} -> HTTP {}", id(), cfg_.endpoint_url, attempt + 1, status);
    if (status == 200) {
      LlmResponse out;
      out.text = rtrim(extract_chat_text(res->body));
      out.backend_id = id();
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
      return out;
    }
    if (status == 401 || status == 403)
      throw Error(Errc::AuthError, cfg_.endpoint_url + ": HTTP " + std::to_string(status));
    const bool transient = status == 429 || (status >= 500 && status <= 599);
    if (!transient)
      throw Error(Errc::MalformedResponse, cfg_.endpoint_url + ": HTTP " + std::to_string(status));
    if (attempt >= cfg_.max_retries) {
      if (status == 429)
        throw Error(Errc::RateLimited, cfg_.endpoint_url + " after " + std::to_string(attempt) + " retries");
      throw Error(Errc::BackendUnavailable, cfg_.endpoint_url + ": HTTP " + std::to_string(status) +
                                                " after " + std::to_string(attempt) + " retries");
    }
    const auto delay = backoff(attempt);
    spdlog::info("llm {}: HTTP {} from {}, retry {}/{} in {} ms", id(), status, cfg_.endpoint_url,
                 attempt + 1, cfg_.max_retries, delay.count());
    cfg_.sleep(delay);
  }
}

LlmResponse HashMockBackend::complete(const LlmRequest& req) const {
  validate_request(req);
  const auto h = request_hash(req, seed_);
  LlmResponse out;
  out.text = "Mock insight " + hex64(h) + ": keep a consistent sleep schedule and review the flagged metrics.";
  out.backend_id = id();
  return out;
}

std::string section_marker(std::string_view label) {
  return "[section: " + std::string(label) + "]";
}

std::size_t count_section_markers(std::string_view text) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (line.starts_with("[section: ") && line.ends_with("]")) ++count;
    pos = end + 1;
  }
  return count;
}

LlmResponse MarkerInsightBackend::complete(const LlmRequest& req) const {
  validate_request(req);
  std::string text;
  std::string_view user = req.user_text;
  std::size_t pos = 0;
  while (pos <= user.size()) {
    auto end = user.find('\n', pos);
    if (end == std::string_view::npos) end = user.size();
    auto line = user.substr(pos, end - pos);
    if (line.starts_with("## ")) text += section_marker(line.substr(3)) + "\n";
    pos = end + 1;
  }
  text += "Insight " + hex64(request_hash(req, seed_)) + ".";
  LlmResponse out;
  out.text = rtrim(std::move(text));
  out.backend_id = id();
  return out;
}

LlmResponse MarkerEvaluatorBackend::complete(const LlmRequest& req) const {
  validate_request(req);
  const auto m = static_cast<long>(count_section_markers(req.user_text));
  auto clamp10 = [](long v) { return std::clamp<long>(v, 0, 10); };
  nlohmann::ordered_json j;
  j["relevance"] = clamp10(4 + m);
  j["comprehensiveness"] = clamp10(4 + m);
  j["actionability"] = clamp10(4 + m);
  j["personalization"] = clamp10(2 * m);
  LlmResponse out;
  out.text = j.dump();
  out.backend_id = id();
  return out;
}

CannedBackend::CannedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {
  if (replies_.empty()) throw Error(Errc::InvalidConfig, "canned backend needs at least one reply");
}

LlmResponse CannedBackend::complete(const LlmRequest& req) const {
  validate_request(req);
  std::lock_guard lock(mutex_);
  const auto i = std::min(calls_, replies_.size() - 1);
  ++calls_;
  return {rtrim(replies_[i]), id(), 0};
}

std::size_t CannedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

}  // namespace sleepgraph

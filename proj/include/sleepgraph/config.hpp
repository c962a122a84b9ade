#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleepgraph/forest.hpp"

namespace sleepgraph {

/// One LLM backend: "mock-hash", "mock-marker", "mock-marker-evaluator" or "http".
struct BackendConfig {
  std::string kind = "mock-marker";
  std::string endpoint_url;
  std::string model = "gpt-4";
  std::string api_key_env = "OPENAI_API_KEY";  // the key itself never lives in the file
  std::int64_t timeout_ms = 60000;
  std::size_t max_in_flight = 4;
  int max_retries = 3;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct AnnotatorConfig {
  std::string kind = "lexicon";  // or "http"
  std::string endpoint_url;
  std::int64_t timeout_ms = 30000;
};

struct PipelineConfig {
  std::filesystem::path demographics_path;
  std::filesystem::path days_path;
  std::vector<std::string> features;  // defaults to the canonical schema
  std::map<std::string, std::string> aliases;  // merged over the built-in aliases
  std::map<std::string, std::string> display_names;
  std::vector<std::string> themes;  // defaults to the built-in theme set
  std::optional<std::filesystem::path> lexicon_path;
  bool annotate_journals = true;
  AnnotatorConfig annotator;
  std::size_t k_days = 3;
  std::size_t n_neighbors = 3;
  ForestConfig forest;
  std::size_t top_features = 5;
  std::optional<std::filesystem::path> templates_dir;
  BackendConfig generator;
  BackendConfig evaluator;
  std::uint64_t shuffle_seed = 0;
  double failure_budget = 0.10;
  std::size_t eval_parallelism = 4;

  static PipelineConfig defaults();
};

/// Relative paths resolve against `base_dir`. Unknown keys, bad types and
/// missing referenced files raise InvalidConfig.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);
/// Paths are written as given (callers pick relative or absolute ones).
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

}  // namespace sleepgraph

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>

#include "sleepgraph/annotate.hpp"
#include "sleepgraph/config.hpp"
#include "sleepgraph/forest.hpp"
#include "sleepgraph/graph.hpp"
#include "sleepgraph/ingest.hpp"
#include "sleepgraph/llm.hpp"
#include "sleepgraph/parse.hpp"
#include "sleepgraph/prompt.hpp"

namespace sleepgraph {

/// Dataset -> annotations -> standardizer -> graph, built once and then
/// queried read-only (importance reports are memoised per patient and metric).
class Pipeline {
 public:
  /// Loads the dataset files named in the config.
  explicit Pipeline(const PipelineConfig& cfg);
  Pipeline(Dataset dataset, const PipelineConfig& cfg);

  const PipelineConfig& config() const noexcept { return config_; }
  const Dataset& dataset() const noexcept { return dataset_; }
  const ThemeSet& themes() const noexcept { return themes_; }
  const AnnotationMap& annotations() const noexcept { return annotations_; }
  const Standardizer& standardizer() const noexcept { return standardizer_; }
  const SimilarityGraph& graph() const noexcept { return graph_; }
  const ParseOptions& parse_options() const noexcept { return parse_options_; }
  const PromptConfig& prompt_config() const noexcept { return prompt_config_; }

  ParsedQuery parse(std::string_view prompt) const;

  /// The forest's report for the query's patient and metric, or the reason
  /// none is available (too few rows, or no split improved the fit).
  std::variant<ImportanceReport, std::string> importance_for(const ParsedQuery& q) const;

  StagedPrompt prompt_for(const ParsedQuery& q, Stage stage) const;

 private:
  PipelineConfig config_;
  Dataset dataset_;
  ThemeSet themes_;
  AnnotationMap annotations_;
  Standardizer standardizer_;
  SimilarityGraph graph_;
  ParseOptions parse_options_;
  PromptConfig prompt_config_;

  mutable std::mutex cache_mutex_;
  mutable std::map<std::pair<std::string, std::string>, std::variant<ImportanceReport, std::string>> cache_;
};

/// Mock backends are built directly; "http" reads its key from the configured
/// environment variable.
std::unique_ptr<LlmBackend> make_backend(const BackendConfig& cfg);

LlmRequest request_for(const StagedPrompt& prompt, const BackendConfig& cfg);

}  // namespace sleepgraph

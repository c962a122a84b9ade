#include "sleepgraph/pipeline.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

namespace {

Dataset load(const PipelineConfig& cfg) {
  return cfg.features.empty() ? load_dataset(cfg.demographics_path, cfg.days_path)
                              : load_dataset(cfg.demographics_path, cfg.days_path, cfg.features);
}

ThemeSet themes_for(const PipelineConfig& cfg) {
  return cfg.themes.empty() ? ThemeSet::defaults() : ThemeSet(cfg.themes);
}

AnnotationMap annotate_all(const Dataset& ds, const ThemeSet& themes, const PipelineConfig& cfg) {
  AnnotationMap out;
  if (!cfg.annotate_journals) return out;
  std::unique_ptr<AnnotatorBackend> backend;
  if (cfg.annotator.kind == "http")
    backend = std::make_unique<HttpAnnotator>(cfg.annotator.endpoint_url,
                                              std::chrono::milliseconds(cfg.annotator.timeout_ms));
  else if (cfg.lexicon_path)
    backend = std::make_unique<LexiconAnnotator>(LexiconAnnotator::from_file(*cfg.lexicon_path));
  else
    backend = std::make_unique<LexiconAnnotator>(LexiconAnnotator::builtin());
  for (const auto& [key, rec] : ds.days())
    out.emplace(key, rec.journal ? annotate_text(*rec.journal, themes, *backend) : Annotation::neutral(themes));
  return out;
}

ParseOptions parse_options_for(const PipelineConfig& cfg) {
  auto opts = ParseOptions::defaults();
  for (const auto& [alias, feature] : cfg.aliases) opts.aliases[normalize_metric_text(alias)] = feature;
  opts.display_names = cfg.display_names;
  return opts;
}

PromptConfig prompt_config_for(const PipelineConfig& cfg) {
  PromptConfig p;
  p.k_days = cfg.k_days;
  p.top_features = cfg.top_features;
  if (cfg.templates_dir) p.templates = PromptTemplates::load(*cfg.templates_dir);
  return p;
}

}  // namespace

Pipeline::Pipeline(const PipelineConfig& cfg) : Pipeline(load(cfg), cfg) {}

Pipeline::Pipeline(Dataset dataset, const PipelineConfig& cfg)
    : config_(cfg),
      dataset_(std::move(dataset)),
      themes_(themes_for(cfg)),
      annotations_(annotate_all(dataset_, themes_, cfg)),
      standardizer_(fit_standardizer(dataset_)),
      graph_(build_graph(dataset_, standardizer_, annotations_)),
      parse_options_(parse_options_for(cfg)),
      prompt_config_(prompt_config_for(cfg)) {}

ParsedQuery Pipeline::parse(std::string_view prompt) const {
  return parse_query(prompt, dataset_, parse_options_);
}

std::variant<ImportanceReport, std::string> Pipeline::importance_for(const ParsedQuery& q) const {
  const auto key = std::make_pair(q.patient_id, q.metric);
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  std::variant<ImportanceReport, std::string> result;
  try {
    const auto m = assemble_training_set(graph_, dataset_, q, config_.n_neighbors, config_.forest.min_rows);
    result = feature_importance(fit_forest(m, config_.forest));
  } catch (const Error& e) {
    if (e.code() != Errc::InsufficientTrainingData && e.code() != Errc::NoSplits) throw;
    result = e.code() == Errc::NoSplits ? std::string("no split reduced the prediction error")
                                        : "not enough training days (" + e.detail() + ")";
  }
  std::lock_guard lock(cache_mutex_);
  return cache_.emplace(key, std::move(result)).first->second;
}

StagedPrompt Pipeline::prompt_for(const ParsedQuery& q, Stage stage) const {
  PromptContext ctx;
  ctx.dataset = &dataset_;
  ctx.annotations = &annotations_;
  ctx.graph = &graph_;
  std::variant<ImportanceReport, std::string> importance;
  if (stage == Stage::FeatureImportance) {
    importance = importance_for(q);
    if (const auto* rep = std::get_if<ImportanceReport>(&importance)) ctx.importance = rep;
    else ctx.importance_notice = std::get<std::string>(importance);
  }
  return build_prompt(stage, q, ctx, prompt_config_);
}

std::unique_ptr<LlmBackend> make_backend(const BackendConfig& cfg) {
  if (cfg.kind == "mock-hash") return std::make_unique<HashMockBackend>(cfg.seed);
  if (cfg.kind == "mock-marker") return std::make_unique<MarkerInsightBackend>(cfg.seed);
  if (cfg.kind == "mock-marker-evaluator") return std::make_unique<MarkerEvaluatorBackend>();
  if (cfg.kind != "http") throw Error(Errc::InvalidConfig, "unknown backend kind '" + cfg.kind + "'");
  HttpBackendConfig h;
  h.endpoint_url = cfg.endpoint_url;
  h.model = cfg.model;
  h.timeout = std::chrono::milliseconds(cfg.timeout_ms);
  h.max_in_flight = cfg.max_in_flight;
  h.max_retries = cfg.max_retries;
  h.jitter_seed = cfg.seed;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str())) h.api_key = key;
    else spdlog::warn("environment variable {} is not set; sending requests without a key", cfg.api_key_env);
  }
  return std::make_unique<HttpChatBackend>(std::move(h));
}

LlmRequest request_for(const StagedPrompt& prompt, const BackendConfig& cfg) {
  LlmRequest req;
  req.system_text = prompt.system_text;
  req.user_text = prompt.rendered;
  req.model_name = cfg.model;
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  return req;
}

}  // namespace sleepgraph

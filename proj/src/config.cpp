#include "sleepgraph/config.hpp"

#include <fstream>
#include <set>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error(Errc::InvalidConfig, why); }

void check_object(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.contains(key)) bad("unknown key '" + where + "." + key + "'");
}

template <class T>
void read(const nlohmann::json& j, const std::string& key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(where + "." + key + " has the wrong type");
  }
}

void read_count(const nlohmann::json& j, const std::string& key, const std::string& where,
                std::size_t& out) {
  if (!j.contains(key)) return;
  if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 0)
    bad(where + "." + key + " must be a non-negative integer");
  out = j[key].get<std::size_t>();
}

fs::path existing(const fs::path& base, const std::string& value, const std::string& what, bool dir = false) {
  fs::path p(value);
  if (p.is_relative()) p = base / p;
  std::error_code ec;
  if (dir ? !fs::is_directory(p, ec) : !fs::is_regular_file(p, ec))
    bad(what + " not found: " + p.string());
  return p;
}

BackendConfig backend_from_json(const nlohmann::json& j, const std::string& where) {
  check_object(j, where, {"kind", "endpoint_url", "model", "api_key_env", "timeout_ms", "max_in_flight",
                          "max_retries", "seed", "temperature", "max_tokens"});
  BackendConfig b;
  read(j, "kind", where, b.kind);
  read(j, "endpoint_url", where, b.endpoint_url);
  read(j, "model", where, b.model);
  read(j, "api_key_env", where, b.api_key_env);
  read(j, "timeout_ms", where, b.timeout_ms);
  read_count(j, "max_in_flight", where, b.max_in_flight);
  read(j, "max_retries", where, b.max_retries);
  read(j, "seed", where, b.seed);
  read(j, "temperature", where, b.temperature);
  read(j, "max_tokens", where, b.max_tokens);
  static const std::set<std::string> kinds{"mock-hash", "mock-marker", "mock-marker-evaluator", "http"};
  if (!kinds.contains(b.kind)) bad(where + ".kind '" + b.kind + "' is not a known backend");
  if (b.kind == "http" && b.endpoint_url.empty()) bad(where + ".endpoint_url is required for http");
  if (b.timeout_ms <= 0) bad(where + ".timeout_ms must be positive");
  if (b.max_in_flight == 0) bad(where + ".max_in_flight must be >= 1");
  return b;
}

nlohmann::ordered_json backend_to_json(const BackendConfig& b) {
  return {{"kind", b.kind},           {"endpoint_url", b.endpoint_url}, {"model", b.model},
          {"api_key_env", b.api_key_env}, {"timeout_ms", b.timeout_ms}, {"max_in_flight", b.max_in_flight},
          {"max_retries", b.max_retries}, {"seed", b.seed},           {"temperature", b.temperature},
          {"max_tokens", b.max_tokens}};
}

}  // namespace

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.forest.rng_seed = 7;
  c.evaluator.kind = "mock-marker-evaluator";
  return c;
}

PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  check_object(j, "config", {"data", "schema", "annotation", "graph", "forest", "prompt", "generator",
                             "evaluator", "eval"});
  auto c = PipelineConfig::defaults();

  if (!j.contains("data")) bad("config.data is required");
  const auto& data = j["data"];
  check_object(data, "data", {"demographics", "days"});
  std::string demographics, days;
  read(data, "demographics", "data", demographics);
  read(data, "days", "data", days);
  if (demographics.empty() || days.empty()) bad("data.demographics and data.days are required");
  c.demographics_path = existing(base_dir, demographics, "demographics file");
  c.days_path = existing(base_dir, days, "days file");

  if (j.contains("schema")) {
    const auto& s = j["schema"];
    check_object(s, "schema", {"features", "aliases", "display_names"});
    read(s, "features", "schema", c.features);
    read(s, "aliases", "schema", c.aliases);
    read(s, "display_names", "schema", c.display_names);
  }

  if (j.contains("annotation")) {
    const auto& a = j["annotation"];
    check_object(a, "annotation", {"enabled", "themes", "lexicon", "backend"});
    read(a, "enabled", "annotation", c.annotate_journals);
    read(a, "themes", "annotation", c.themes);
    if (a.contains("lexicon") && !a["lexicon"].is_null()) {
      if (!a["lexicon"].is_string()) bad("annotation.lexicon must be a path");
      c.lexicon_path = existing(base_dir, a["lexicon"].get<std::string>(), "lexicon file");
    }
    if (a.contains("backend")) {
      const auto& b = a["backend"];
      check_object(b, "annotation.backend", {"kind", "endpoint_url", "timeout_ms"});
      read(b, "kind", "annotation.backend", c.annotator.kind);
      read(b, "endpoint_url", "annotation.backend", c.annotator.endpoint_url);
      read(b, "timeout_ms", "annotation.backend", c.annotator.timeout_ms);
      if (c.annotator.kind != "lexicon" && c.annotator.kind != "http")
        bad("annotation.backend.kind must be lexicon or http");
      if (c.annotator.kind == "http" && c.annotator.endpoint_url.empty())
        bad("annotation.backend.endpoint_url is required for http");
    }
  }

  if (j.contains("graph")) {
    const auto& g = j["graph"];
    check_object(g, "graph", {"k_days", "n_neighbors"});
    read_count(g, "k_days", "graph", c.k_days);
    read_count(g, "n_neighbors", "graph", c.n_neighbors);
  }

  if (j.contains("forest")) {
    const auto& f = j["forest"];
    check_object(f, "forest", {"n_trees", "max_depth", "min_samples_leaf", "features_per_split", "bootstrap",
                               "rng_seed", "min_rows", "threads"});
    read_count(f, "n_trees", "forest", c.forest.n_trees);
    read_count(f, "min_samples_leaf", "forest", c.forest.min_samples_leaf);
    read(f, "bootstrap", "forest", c.forest.bootstrap);
    read(f, "rng_seed", "forest", c.forest.rng_seed);
    read_count(f, "min_rows", "forest", c.forest.min_rows);
    read_count(f, "threads", "forest", c.forest.threads);
    for (auto [key, slot] : {std::pair{"max_depth", &c.forest.max_depth},
                             std::pair{"features_per_split", &c.forest.features_per_split}}) {
      if (!f.contains(key) || f[key].is_null()) continue;
      if (!f[key].is_number_integer() || f[key].get<std::int64_t>() < 0) bad(std::string("forest.") + key + " must be a non-negative integer or null");
      *slot = f[key].get<std::size_t>();
    }
  }

  if (j.contains("prompt")) {
    const auto& p = j["prompt"];
    check_object(p, "prompt", {"templates", "top_features"});
    read_count(p, "top_features", "prompt", c.top_features);
    if (p.contains("templates") && !p["templates"].is_null()) {
      if (!p["templates"].is_string()) bad("prompt.templates must be a directory path");
      c.templates_dir = existing(base_dir, p["templates"].get<std::string>(), "templates directory", true);
    }
  }

  if (j.contains("generator")) c.generator = backend_from_json(j["generator"], "generator");
  if (j.contains("evaluator")) c.evaluator = backend_from_json(j["evaluator"], "evaluator");

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_object(e, "eval", {"shuffle_seed", "failure_budget", "parallelism"});
    read(e, "shuffle_seed", "eval", c.shuffle_seed);
    read(e, "failure_budget", "eval", c.failure_budget);
    read_count(e, "parallelism", "eval", c.eval_parallelism);
    if (!(c.failure_budget >= 0 && c.failure_budget <= 1)) bad("eval.failure_budget must be in [0, 1]");
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    bad(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = {{"demographics", c.demographics_path.generic_string()}, {"days", c.days_path.generic_string()}};
  nlohmann::ordered_json schema = nlohmann::ordered_json::object();
  if (!c.features.empty()) schema["features"] = c.features;
  if (!c.aliases.empty()) schema["aliases"] = c.aliases;
  if (!c.display_names.empty()) schema["display_names"] = c.display_names;
  j["schema"] = schema;
  nlohmann::ordered_json ann;
  ann["enabled"] = c.annotate_journals;
  if (!c.themes.empty()) ann["themes"] = c.themes;
  ann["lexicon"] = c.lexicon_path ? nlohmann::ordered_json(c.lexicon_path->generic_string()) : nlohmann::ordered_json(nullptr);
  ann["backend"] = {{"kind", c.annotator.kind}, {"endpoint_url", c.annotator.endpoint_url},
                    {"timeout_ms", c.annotator.timeout_ms}};
  j["annotation"] = ann;
  j["graph"] = {{"k_days", c.k_days}, {"n_neighbors", c.n_neighbors}};
  nlohmann::ordered_json f;
  f["n_trees"] = c.forest.n_trees;
  f["max_depth"] = c.forest.max_depth ? nlohmann::ordered_json(*c.forest.max_depth) : nlohmann::ordered_json(nullptr);
  f["min_samples_leaf"] = c.forest.min_samples_leaf;
  f["features_per_split"] =
      c.forest.features_per_split ? nlohmann::ordered_json(*c.forest.features_per_split) : nlohmann::ordered_json(nullptr);
  f["bootstrap"] = c.forest.bootstrap;
  f["rng_seed"] = c.forest.rng_seed;
  f["min_rows"] = c.forest.min_rows;
  f["threads"] = c.forest.threads;
  j["forest"] = f;
  j["prompt"] = {{"templates", c.templates_dir ? nlohmann::ordered_json(c.templates_dir->generic_string()) : nlohmann::ordered_json(nullptr)},
                 {"top_features", c.top_features}};
  j["generator"] = backend_to_json(c.generator);
  j["evaluator"] = backend_to_json(c.evaluator);
  j["eval"] = {{"shuffle_seed", c.shuffle_seed}, {"failure_budget", c.failure_budget},
               {"parallelism", c.eval_parallelism}};
  return j;
}

}  // namespace sleepgraph

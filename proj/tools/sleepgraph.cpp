// sleepgraph: command-line entry point (synth, query, eval, dump-graph, write-templates).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sleepgraph/config.hpp"
#include "sleepgraph/error.hpp"
#include "sleepgraph/eval.hpp"
#include "sleepgraph/pipeline.hpp"
#include "sleepgraph/synth.hpp"

namespace fs = std::filesystem;
using namespace sleepgraph;

namespace {

int exit_code(Errc code) {
  switch (category_of(code)) {
    case ErrorCategory::Parse: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Backend: return 4;
    case ErrorCategory::Usage: return 1;
  }
  return 1;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
}

struct SynthArgs {
  fs::path out_dir;
  SynthSpec spec;
  std::vector<std::string> weights;
  std::size_t n_queries = 50;
  std::uint64_t query_seed = 1;
};

int cmd_synth(SynthArgs a) {
  if (!a.weights.empty()) {
    a.spec.target_formula.weights.clear();
    for (const auto& w : a.weights) {
      const auto eq = w.find('=');
      if (eq == std::string::npos) throw Error(Errc::Usage, "--weight expects feature=value, got '" + w + "'");
      double value = 0.0;
      try {
        std::size_t used = 0;
        value = std::stod(w.substr(eq + 1), &used);
        if (used != w.size() - eq - 1) throw std::invalid_argument(w);
      } catch (const std::exception&) {
        throw Error(Errc::Usage, "--weight value is not a number: '" + w + "'");
      }
      a.spec.target_formula.weights.emplace_back(w.substr(0, eq), value);
    }
  }
  const auto result = generate(a.spec);
  write_synth(result, a.out_dir);

  auto cfg = PipelineConfig::defaults();
  cfg.demographics_path = "demographics.csv";
  cfg.days_path = "days.jsonl";
  write_file(a.out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");

  std::string queries;
  for (const auto& q : generate_queries(result.dataset, a.n_queries, a.query_seed)) queries += q + "\n";
  write_file(a.out_dir / "queries.txt", queries);

  std::cout << "wrote " << result.dataset.demographics().size() << " patients, " << result.dataset.days().size()
            << " days and " << a.n_queries << " queries to " << a.out_dir.string() << "\n";
  return 0;
}

int cmd_query(const fs::path& config_path, const std::string& prompt, int stage_number, bool dry_run) {
  const auto stage = stage_from_number(stage_number);
  const auto cfg = load_config(config_path);
  const Pipeline pipeline(cfg);
  const auto q = pipeline.parse(prompt);
  const auto staged = pipeline.prompt_for(q, stage);
  if (dry_run) {
    std::cout << staged.rendered;
    return 0;
  }
  const auto backend = make_backend(cfg.generator);
  const auto response = backend->complete(request_for(staged, cfg.generator));
  std::cout << response.text << "\n\n---\n";
  std::cout << "query: " << q.patient_id << " " << q.date.iso() << " " << q.metric << " (stage "
            << stage_number << ")\n";
  std::cout << "sources:\n";
  for (const auto& p : staged.provenance) std::cout << "- " << p << "\n";
  std::cout << "backend: " << response.backend_id << " (" << response.latency_ms << " ms)\n";
  return 0;
}

int cmd_eval(const fs::path& config_path, const fs::path& queries_path, std::optional<std::uint64_t> seed,
             const std::optional<fs::path>& log_path, const std::optional<fs::path>& table_path,
             const std::optional<fs::path>& csv_path) {
  std::ifstream in(queries_path);
  if (!in) throw Error(Errc::Io, "cannot open queries file " + queries_path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw Error(Errc::Usage, "queries file " + queries_path.string() + " has no prompts");

  const auto cfg = load_config(config_path);
  const Pipeline pipeline(cfg);
  std::vector<ParsedQuery> queries;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      queries.push_back(pipeline.parse(lines[i]));
    } catch (const Error& e) {
      throw Error(e.code(), queries_path.string() + ":" + std::to_string(i + 1) + ": " + e.detail());
    }
  }

  const auto generator = make_backend(cfg.generator);
  const auto evaluator = make_backend(cfg.evaluator);
  ExperimentConfig ec;
  ec.shuffle_seed = seed.value_or(cfg.shuffle_seed);
  ec.failure_budget = cfg.failure_budget;
  ec.parallelism = cfg.eval_parallelism;
  const auto result = run_experiment(
      queries, [&](const ParsedQuery& q, Stage s) { return pipeline.prompt_for(q, s); }, *generator, *evaluator,
      ec);

  const auto table = render_table(result.table);
  std::cout << table;
  if (!result.dropped_queries.empty())
    std::cout << result.dropped_queries.size() << " queries dropped after item failures\n";
  if (log_path) {
    std::ofstream log(*log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(Errc::Io, "cannot write " + log_path->string());
    write_record_log(result.records, log);
  }
  if (table_path) write_file(*table_path, table);
  if (csv_path) write_file(*csv_path, render_csv(result.table));
  return 0;
}

int cmd_dump_graph(const fs::path& config_path, const std::optional<fs::path>& out) {
  const Pipeline pipeline(load_config(config_path));
  const auto text = graph_to_json(pipeline.graph()).dump(2) + "\n";
  if (out) write_file(*out, text);
  else std::cout << text;
  return 0;
}

int cmd_write_templates(const fs::path& dir) {
  fs::create_directories(dir);
  const auto t = PromptTemplates::defaults();
  const std::vector<const std::string*> texts{&t.system, &t.instruction, &t.demographics, &t.current_day,
                                              &t.similar_days, &t.feature_importance,
                                              &t.feature_importance_unavailable};
  const auto& names = PromptTemplates::file_names();
  for (std::size_t i = 0; i < names.size(); ++i) write_file(dir / (names[i] + ".txt"), *texts[i] + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based personalized sleep insights"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic cohort, config and query file");
  s->add_option("--out", synth.out_dir, "Output directory")->required();
  s->add_option("--patients", synth.spec.n_patients, "Number of patients")->capture_default_str();
  s->add_option("--days", synth.spec.days_per_patient, "Days per patient")->capture_default_str();
  s->add_option("--clusters", synth.spec.n_clusters, "Number of patient clusters")->capture_default_str();
  s->add_option("--anomalies", synth.spec.anomaly_days_per_patient, "Anomaly days per patient")
      ->capture_default_str();
  s->add_option("--seed", synth.spec.rng_seed, "RNG seed")->capture_default_str();
  s->add_option("--noise", synth.spec.target_formula.noise_sigma, "Target noise sigma")->capture_default_str();
  s->add_option("--weight", synth.weights, "Target weight feature=value (repeatable)");
  s->add_option("--journal-rate", synth.spec.journal_rate, "Probability of a journal entry")
      ->capture_default_str();
  s->add_option("--missing-rate", synth.spec.missing_rate, "Probability of a missing metric")
      ->capture_default_str();
  s->add_option("--queries", synth.n_queries, "Number of prompts written to queries.txt")->capture_default_str();
  s->add_option("--query-seed", synth.query_seed, "Seed for queries.txt")->capture_default_str();

  fs::path config_path = "config.json";
  std::string prompt;
  int stage = 4;
  bool dry_run = false;
  auto* q = app.add_subcommand("query", "Answer one free-text question");
  q->add_option("--config", config_path, "Pipeline config (JSON)")->capture_default_str();
  q->add_option("--stage", stage, "Prompt stage 1..4")->check(CLI::Range(1, 4))->capture_default_str();
  q->add_flag("--dry-run", dry_run, "Print the rendered prompt instead of calling the LLM");
  q->add_option("prompt", prompt, "Question, e.g. \"How did P03 sleep on 2020-04-12? sleep score\"")->required();

  fs::path queries_path;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> log_path, table_path, csv_path, graph_out;
  auto* e = app.add_subcommand("eval", "Run the four-stage evaluation over a query file");
  e->add_option("--config", config_path, "Pipeline config (JSON)")->capture_default_str();
  e->add_option("--queries", queries_path, "One prompt per line")->required();
  e->add_option("--seed", seed, "Shuffle seed (overrides the config)");
  e->add_option("--log", log_path, "Write the JSONL record log here");
  e->add_option("--table", table_path, "Write the text table here");
  e->add_option("--csv", csv_path, "Write the CSV table here");

  auto* g = app.add_subcommand("dump-graph", "Print the similarity graph as JSON");
  g->add_option("--config", config_path, "Pipeline config (JSON)")->capture_default_str();
  g->add_option("--out", graph_out, "Write to a file instead of stdout");

  fs::path templates_dir;
  auto* t = app.add_subcommand("write-templates", "Write the built-in prompt templates to a directory");
  t->add_option("dir", templates_dir, "Target directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_color_mt("sleepgraph");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*s) return cmd_synth(synth);
    if (*q) return cmd_query(config_path, prompt, stage, dry_run);
    if (*e) return cmd_eval(config_path, queries_path, seed, log_path, table_path, csv_path);
    if (*g) return cmd_dump_graph(config_path, graph_out);
    if (*t) return cmd_write_templates(templates_dir);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code(err.code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 1;
}

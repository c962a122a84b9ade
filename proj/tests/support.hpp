#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sleepgraph/annotate.hpp"
#include "sleepgraph/error.hpp"
#include "sleepgraph/forest.hpp"
#include "sleepgraph/graph.hpp"
#include "sleepgraph/ingest.hpp"
#include "sleepgraph/parse.hpp"
#include "sleepgraph/synth.hpp"

namespace sgtest {

using namespace sleepgraph;

inline DayRecord day(const std::string& pid, const std::string& iso,
                     std::map<std::string, std::optional<double>> metrics,
                     std::optional<std::string> journal = std::nullopt) {
  DayRecord r;
  r.patient_id = pid;
  r.date = Date::parse_iso(iso).value();
  r.metrics = std::move(metrics);
  r.journal = std::move(journal);
  return r;
}

inline std::map<std::string, std::optional<double>> metrics(double score, double dur, double wake, double rem,
                                                            double hrv, double act) {
  return {{"sleep_score", score}, {"sleep_duration_min", dur}, {"wakefulness_min", wake},
          {"rem_min", rem},       {"hrv_ms", hrv},             {"activity_score", act}};
}

/// Two patients, a handful of days each.
inline Dataset small_dataset() {
  Dataset ds;
  ds.add_patient({"P03", 21, "female", "Asian"});
  ds.add_patient({"P07", 23, "male", "White"});
  ds.add_day(day("P03", "2020-04-11", metrics(80, 430, 30, 95, 55, 70), "Felt great, slept well."));
  ds.add_day(day("P03", "2020-04-12", metrics(62, 380, 70, 80, 42, 60), "Stressed about an exam."));
  ds.add_day(day("P03", "2020-04-13", metrics(75, 410, 40, 90, 50, 75)));
  ds.add_day(day("P03", "2020-04-14", metrics(70, 400, 50, 85, 48, 65)));
  ds.add_day(day("P07", "2020-04-11", metrics(68, 395, 55, 88, 47, 72)));
  ds.add_day(day("P07", "2020-04-12", metrics(55, 350, 85, 70, 38, 50), "Bad night, restless."));
  ds.add_day(day("P07", "2020-04-13", metrics(72, 420, 45, 92, 52, 80)));
  return ds;
}

/// Plain-loop cosine, written independently of the library.
inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Day vectors and patient means recomputed from the dataset.
struct OracleVectors {
  std::map<DayKey, std::vector<double>> days;
  std::map<std::string, std::vector<double>> patients;
};

inline OracleVectors oracle_vectors(const Dataset& ds, const Standardizer& stdz, const AnnotationMap& ann = {}) {
  OracleVectors out;
  for (const auto& [key, rec] : ds.days()) {
    const Annotation* a = nullptr;
    if (!ann.empty()) a = &ann.at(key);
    out.days[key] = vectorize_day(rec, stdz, a).values;
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& [key, v] : out.days) {
    auto& m = out.patients[key.patient_id];
    if (m.empty()) m.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i];
    ++counts[key.patient_id];
  }
  for (auto& [pid, m] : out.patients)
    for (auto& x : m) x /= static_cast<double>(counts[pid]);
  return out;
}

using Ranking = std::vector<std::pair<std::string, double>>;

/// Full sort of every candidate, then truncate.
inline Ranking oracle_rank(Ranking all, std::size_t k, bool descending) {
  std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return descending ? a.second > b.second : a.second < b.second;
    return a.first < b.first;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline Ranking oracle_days(const OracleVectors& ov, const DayKey& q, std::size_t k, bool descending) {
  Ranking all;
  const auto& qv = ov.days.at(q);
  for (const auto& [key, v] : ov.days)
    if (key.patient_id == q.patient_id && key != q) all.emplace_back(key.node_id(), oracle_cosine(qv, v));
  return oracle_rank(std::move(all), k, descending);
}

inline Ranking oracle_patients(const OracleVectors& ov, const std::string& pid, std::size_t k) {
  Ranking all;
  const auto& qv = ov.patients.at(pid);
  for (const auto& [other, v] : ov.patients)
    if (other != pid) all.emplace_back(other, oracle_cosine(qv, v));
  return oracle_rank(std::move(all), k, true);
}

inline Ranking as_ranking(const NeighborResult& r) {
  Ranking out;
  for (const auto& n : r.items) out.emplace_back(n.id, n.similarity);
  return out;
}

/// Lexicon annotations for every day (neutral where there is no journal).
inline AnnotationMap annotate_dataset(const Dataset& ds, const ThemeSet& themes = ThemeSet::defaults()) {
  AnnotationMap out;
  const auto lex = LexiconAnnotator::builtin();
  for (const auto& [key, rec] : ds.days())
    out.emplace(key, rec.journal ? annotate_text(*rec.journal, themes, lex) : Annotation::neutral(themes));
  return out;
}

/// The checked-in dataset the parser corpus refers to.
inline Dataset corpus_dataset() {
  return load_dataset(std::string(SG_TEST_DATA) + "/corpus_demographics.csv",
                      std::string(SG_TEST_DATA) + "/corpus_days.jsonl");
}

struct CorpusCase {
  std::string prompt;
  std::optional<ParsedQuery> expected;  // set unless an error is expected
  std::string error;                    // Errc name
};

inline std::vector<CorpusCase> load_parse_corpus() {
  std::ifstream in(std::string(SG_TEST_DATA) + "/parse_corpus.jsonl");
  std::vector<CorpusCase> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CorpusCase c;
    c.prompt = j.at("prompt");
    if (j.contains("error")) {
      c.error = j.at("error");
    } else {
      c.expected = ParsedQuery{j.at("patient_id"), Date::parse_iso(j.at("date").get<std::string>()).value(),
                               j.at("metric"), c.prompt};
    }
    out.push_back(std::move(c));
  }
  return out;
}

/// Empty when the parser agrees with the case, otherwise a description.
inline std::string check_corpus_case(const CorpusCase& c, const Dataset& ds) {
  try {
    const auto q = parse_query(c.prompt, ds);
    if (!c.expected) return "expected " + c.error + ", parsed " + q.patient_id + " " + q.date.iso() + " " + q.metric;
    if (q == *c.expected) return {};
    return "expected " + c.expected->patient_id + " " + c.expected->date.iso() + " " + c.expected->metric +
           ", parsed " + q.patient_id + " " + q.date.iso() + " " + q.metric;
  } catch (const Error& e) {
    if (!c.expected && errc_name(e.code()) == c.error) return {};
    return std::string("unexpected ") + e.what();
  }
}

/// Planted-signal run on a default synthetic cohort: query patient P01 plus
/// its three nearest patients, 100 trees, both seeds set to `seed`.
struct PlantedRun {
  TrainingMatrix matrix;
  ImportanceReport report;
  double seconds = 0.0;  // forest fit + importance
};

inline PlantedRun planted_run(std::uint64_t seed) {
  SynthSpec spec;
  spec.rng_seed = seed;
  const auto r = generate(spec);
  const auto stdz = fit_standardizer(r.dataset);
  const auto ann = annotate_dataset(r.dataset);
  const auto g = build_graph(r.dataset, stdz, ann);
  const ParsedQuery q{"P01", r.dataset.days_of("P01").front()->date, "sleep_score", ""};
  PlantedRun run{assemble_training_set(g, r.dataset, q, 3), {}, 0.0};
  ForestConfig cfg;
  cfg.rng_seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  run.report = feature_importance(fit_forest(run.matrix, cfg));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

}  // namespace sgtest

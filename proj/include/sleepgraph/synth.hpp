#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleepgraph/date.hpp"
#include "sleepgraph/ingest.hpp"

namespace sleepgraph {

/// target = intercept + scale * (sum_f weight_f * z_f + noise), clamped to
/// [0, 100], where z_f is feature f standardized with its nominal mean and sd.
struct TargetFormula {
  std::string target = "sleep_score";
  std::vector<std::pair<std::string, double>> weights{{"wakefulness_min", -0.6}, {"hrv_ms", 0.4}};
  double noise_sigma = 0.1;
  double intercept = 70.0;
  double scale = 10.0;
};

struct SynthSpec {
  std::size_t n_patients = 20;
  std::size_t days_per_patient = 240;
  std::size_t n_clusters = 2;
  TargetFormula target_formula;
  std::size_t anomaly_days_per_patient = 1;
  std::uint64_t rng_seed = 42;
  Date start_date{2020, 3, 1};
  double cluster_spread = 0.8;   // sd of cluster centre offsets, in nominal sd units
  double patient_spread = 0.2;   // sd of per-patient offsets around the centre
  double day_noise = 1.0;        // sd of daily deviations around the patient centre
  double journal_rate = 0.5;     // probability that a day has a journal entry
  double missing_rate = 0.0;     // probability that a non-target metric is missing

  /// Throws InvalidSpec.
  void validate() const;
};

/// Nominal (mean, sd) of every generated non-target canonical feature.
const std::vector<std::pair<std::string, std::pair<double, double>>>& nominal_features();

struct GroundTruth {
  std::uint64_t rng_seed = 0;
  std::map<std::string, std::size_t> cluster_of;  // patient id -> cluster
  std::vector<std::vector<double>> cluster_centres;  // cluster x nominal feature, sd units
  TargetFormula target_formula;
  std::vector<std::string> anomaly_days;  // node ids, ascending

  nlohmann::ordered_json to_json() const;
  static GroundTruth from_json(const nlohmann::json& j);
};

struct SynthResult {
  Dataset dataset;
  GroundTruth truth;
};

SynthResult generate(const SynthSpec& spec);

/// Writes demographics.csv, days.jsonl and ground_truth.json into `dir`.
void write_synth(const SynthResult& result, const std::filesystem::path& dir);

/// Natural-language prompts over random (patient, day, metric) triples of the
/// dataset, in formats parse_query accepts.
std::vector<std::string> generate_queries(const Dataset& dataset, std::size_t n, std::uint64_t seed);

}  // namespace sleepgraph

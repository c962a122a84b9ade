#include "sleepgraph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

namespace {

const std::vector<std::string> kPositive{"Felt great today.", "Good day overall, I enjoyed it.",
                                         "Excited and feeling better than yesterday.",
                                         "Calm and happy most of the day."};
const std::vector<std::string> kNeutral{"Ordinary day.", "Nothing special happened.",
                                        "A regular Tuesday kind of day."};
const std::vector<std::string> kNegative{"Felt awful today.", "Bad day, really frustrated.",
                                         "Exhausted and bored all afternoon.",
                                         "Sad and a bit lonely tonight."};
const std::vector<std::pair<std::string, std::vector<std::string>>> kThemePhrases{
    {"academics", {"Spent hours studying for an exam.", "Long lecture and lots of homework."}},
    {"personal_wellbeing", {"Took some time for meditation.", "Thought about my health and mood."}},
    {"social_interactions", {"Talked with friends on zoom.", "Dinner with my roommate and family."}},
    {"sleep_habits", {"Went to bed late and woke early.", "Took a nap after lunch."}},
    {"stress", {"Under a lot of pressure this week.", "Some stress about the future."}},
    {"physical_activity", {"Went for a run in the park.", "Did a workout at the gym."}},
};
const std::vector<std::string> kEthnicities{"Asian", "Black", "Hispanic", "White", "Mixed"};

template <class T>
const T& pick(const std::vector<T>& xs, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, xs.size() - 1);
  return xs[d(rng)];
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

std::string patient_id_for(std::size_t i, std::size_t n) {
  const auto width = std::max<std::size_t>(2, std::to_string(n).size());
  auto digits = std::to_string(i + 1);
  return "P" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

const std::vector<std::pair<std::string, std::pair<double, double>>>& nominal_features() {
  static const std::vector<std::pair<std::string, std::pair<double, double>>> kNominal{
      {"sleep_duration_min", {420.0, 45.0}},
      {"wakefulness_min", {45.0, 15.0}},
      {"rem_min", {90.0, 20.0}},
      {"hrv_ms", {50.0, 12.0}},
      {"activity_score", {70.0, 12.0}},
  };
  return kNominal;
}

void SynthSpec::validate() const {
  auto bad = [](const std::string& why) { throw Error(Errc::InvalidSpec, why); };
  if (n_patients == 0) bad("n_patients must be >= 1");
  if (days_per_patient == 0) bad("days_per_patient must be >= 1");
  if (n_clusters == 0 || n_clusters > n_patients) bad("n_clusters must be in [1, n_patients]");
  if (anomaly_days_per_patient > days_per_patient) bad("more anomaly days than days");
  if (!is_valid_date(start_date.year, start_date.month, start_date.day)) bad("invalid start date");
  if (target_formula.target != "sleep_score") bad("only sleep_score can be the generated target");
  std::set<std::string> seen;
  for (const auto& [name, w] : target_formula.weights) {
    const auto& nom = nominal_features();
    if (std::none_of(nom.begin(), nom.end(), [&](const auto& p) { return p.first == name; }))
      bad("weight for unknown feature '" + name + "'");
    if (!seen.insert(name).second) bad("duplicate weight for '" + name + "'");
    if (!std::isfinite(w)) bad("non-finite weight for '" + name + "'");
  }
  auto finite_nonneg = [&](double v, const char* what) {
    if (!std::isfinite(v) || v < 0) bad(std::string(what) + " must be finite and >= 0");
  };
  finite_nonneg(target_formula.noise_sigma, "noise_sigma");
  finite_nonneg(target_formula.scale, "scale");
  finite_nonneg(cluster_spread, "cluster_spread");
  finite_nonneg(patient_spread, "patient_spread");
  finite_nonneg(day_noise, "day_noise");
  if (!std::isfinite(target_formula.intercept)) bad("intercept must be finite");
  if (!(journal_rate >= 0 && journal_rate <= 1)) bad("journal_rate must be in [0, 1]");
  if (!(missing_rate >= 0 && missing_rate < 1)) bad("missing_rate must be in [0, 1)");
}

nlohmann::ordered_json GroundTruth::to_json() const {
  nlohmann::ordered_json j;
  j["rng_seed"] = rng_seed;
  nlohmann::ordered_json clusters = nlohmann::ordered_json::object();
  for (const auto& [p, c] : cluster_of) clusters[p] = c;
  j["clusters"] = clusters;
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const auto& [name, ms] : nominal_features())
    features.push_back({{"name", name}, {"mean", ms.first}, {"sd", ms.second}});
  j["nominal_features"] = features;
  j["cluster_centres"] = cluster_centres;
  nlohmann::ordered_json weights = nlohmann::ordered_json::object();
  for (const auto& [name, w] : target_formula.weights) weights[name] = w;
  j["target_formula"] = {{"target", target_formula.target},
                         {"intercept", target_formula.intercept},
                         {"scale", target_formula.scale},
                         {"weights", weights},
                         {"noise_sigma", target_formula.noise_sigma}};
  j["anomaly_days"] = anomaly_days;
  return j;
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
  try {
    GroundTruth t;
    t.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    for (const auto& [p, c] : j.at("clusters").items()) t.cluster_of[p] = c.get<std::size_t>();
    t.cluster_centres = j.at("cluster_centres").get<std::vector<std::vector<double>>>();
    const auto& f = j.at("target_formula");
    t.target_formula.target = f.at("target").get<std::string>();
    t.target_formula.intercept = f.at("intercept").get<double>();
    t.target_formula.scale = f.at("scale").get<double>();
    t.target_formula.noise_sigma = f.at("noise_sigma").get<double>();
    t.target_formula.weights.clear();
    // nlohmann::json sorts object keys; keep the nominal feature order instead.
    for (const auto& [name, ms] : nominal_features())
      if (f.at("weights").contains(name))
        t.target_formula.weights.emplace_back(name, f.at("weights").at(name).get<double>());
    t.anomaly_days = j.at("anomaly_days").get<std::vector<std::string>>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("ground truth: ") + e.what());
  }
}

SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const auto& nominal = nominal_features();
  const std::size_t d = nominal.size();

  SynthResult out;
  auto& truth = out.truth;
  truth.rng_seed = spec.rng_seed;
  truth.target_formula = spec.target_formula;

  // Cluster centres, re-centred so the cohort mean sits on the nominal means.
  truth.cluster_centres.assign(spec.n_clusters, std::vector<double>(d, 0.0));
  for (auto& c : truth.cluster_centres)
    for (auto& v : c) v = spec.cluster_spread * unit(rng);
  if (spec.n_clusters > 1) {
    for (std::size_t f = 0; f < d; ++f) {
      double m = 0.0;
      for (const auto& c : truth.cluster_centres) m += c[f];
      m /= static_cast<double>(spec.n_clusters);
      for (auto& c : truth.cluster_centres) c[f] -= m;
    }
  }

  std::vector<double> weight(d, 0.0);
  for (const auto& [name, w] : spec.target_formula.weights)
    for (std::size_t f = 0; f < d; ++f)
      if (nominal[f].first == name) weight[f] = w;

  std::vector<std::string> themes;
  for (const auto& [label, phrases] : kThemePhrases) themes.push_back(label);

  for (std::size_t p = 0; p < spec.n_patients; ++p) {
    const auto pid = patient_id_for(p, spec.n_patients);
    const std::size_t cluster = p % spec.n_clusters;
    truth.cluster_of[pid] = cluster;

    Demographics demo;
    demo.patient_id = pid;
    demo.age = std::uniform_int_distribution<int>(18, 24)(rng);
    const double g = u01(rng);
    demo.gender = g < 0.5 ? "female" : g < 0.9 ? "male" : "nonbinary";
    demo.ethnicity = pick(kEthnicities, rng);
    out.dataset.add_patient(demo);

    std::vector<double> centre = truth.cluster_centres[cluster];
    for (auto& v : centre) v += spec.patient_spread * unit(rng);
    double centre_norm2 = 0.0;
    for (double v : centre) centre_norm2 += v * v;

    std::vector<std::size_t> idx(spec.days_per_patient);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::set<std::size_t> anomalies(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(spec.anomaly_days_per_patient));

    for (std::size_t day = 0; day < spec.days_per_patient; ++day) {
      DayRecord rec;
      rec.patient_id = pid;
      rec.date = spec.start_date.plus_days(static_cast<int>(day));

      std::vector<double> z(d);
      if (anomalies.contains(day)) {
        // Large draw with the component along the patient's centre removed.
        for (auto& v : z) v = 2.0 * unit(rng);
        if (centre_norm2 > 0) {
          double dot = 0.0;
          for (std::size_t f = 0; f < d; ++f) dot += z[f] * centre[f];
          for (std::size_t f = 0; f < d; ++f) z[f] -= dot / centre_norm2 * centre[f];
        }
        truth.anomaly_days.push_back(rec.key().node_id());
      } else {
        for (std::size_t f = 0; f < d; ++f) z[f] = centre[f] + spec.day_noise * unit(rng);
      }

      double signal = 0.0;
      for (std::size_t f = 0; f < d; ++f) {
        const auto& [name, ms] = nominal[f];
        double raw = round1(std::max(0.0, ms.first + ms.second * z[f]));
        if (name == "activity_score") raw = std::min(raw, 100.0);
        // The target sees the value that is actually recorded.
        signal += weight[f] * (raw - ms.first) / ms.second;
        const bool missing = spec.missing_rate > 0 && u01(rng) < spec.missing_rate;
        rec.metrics[name] = missing ? std::nullopt : std::optional<double>(raw);
      }
      const double noise = spec.target_formula.noise_sigma * unit(rng);
      const double target = spec.target_formula.intercept + spec.target_formula.scale * (signal + noise);
      rec.metrics[spec.target_formula.target] = round1(std::clamp(target, 0.0, 100.0));

      if (u01(rng) < spec.journal_rate) {
        const double mood = u01(rng);
        const auto& tone = mood < 1.0 / 3 ? kNegative : mood < 2.0 / 3 ? kNeutral : kPositive;
        const auto& theme = kThemePhrases[std::uniform_int_distribution<std::size_t>(0, kThemePhrases.size() - 1)(rng)];
        rec.journal = pick(tone, rng) + " " + pick(theme.second, rng);
      }
      out.dataset.add_day(std::move(rec));
    }
  }
  std::sort(truth.anomaly_days.begin(), truth.anomaly_days.end());
  return out;
}

void write_synth(const SynthResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + p.string());
    return out;
  };
  {
    auto out = open(dir / "demographics.csv");
    write_demographics_csv(result.dataset, out);
  }
  {
    auto out = open(dir / "days.jsonl");
    write_days_jsonl(result.dataset, out);
  }
  {
    auto out = open(dir / "ground_truth.json");
    out << result.truth.to_json().dump(2) << '\n';
  }
}

std::vector<std::string> generate_queries(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  std::vector<const DayRecord*> days;
  for (const auto& [key, rec] : dataset.days()) days.push_back(&rec);
  if (days.empty()) throw Error(Errc::EmptyDataset, "no days to build queries from");

  static const std::vector<std::pair<std::string, std::string>> kMetrics{
      {"sleep score", "sleep_score"}, {"sleep score", "sleep_score"}, {"sleep score", "sleep_score"},
      {"HRV", "hrv_ms"},              {"wakefulness", "wakefulness_min"},
      {"REM sleep", "rem_min"},        {"total sleep", "sleep_duration_min"},
      {"activity level", "activity_score"}};
  static const std::vector<std::string> kMonths{"January", "February", "March",     "April",
                                                "May",     "June",     "July",      "August",
                                                "September", "October", "November", "December"};

  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = pick(days, rng);
    std::string metric;
    for (int tries = 0; tries < 8; ++tries) {
      const auto& [phrase, feature] = pick(kMetrics, rng);
      metric = phrase;
      if (rec->metric(feature)) break;
    }
    const auto& date = rec->date;
    const std::string iso = date.iso();
    const std::string long_date =
        kMonths[static_cast<std::size_t>(date.month - 1)] + " " + std::to_string(date.day) + ", " +
        std::to_string(date.year);
    const auto& pid = rec->patient_id;
    switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
      case 0: out.push_back("How can " + pid + " improve their " + metric + " after " + iso + "?"); break;
      case 1: out.push_back("What does the " + metric + " of " + pid + " on " + long_date + " tell us?"); break;
      case 2: out.push_back(pid + " " + iso + ": explain my " + metric + "."); break;
      case 3: out.push_back("Give me insights on " + metric + " for patient " + pid + " on " + long_date + "."); break;
      default: out.push_back("Why was the " + metric + " of " + pid + " like that on " + iso + "?"); break;
    }
  }
  return out;
}

}  // namespace sleepgraph

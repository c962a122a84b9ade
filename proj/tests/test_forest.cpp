#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "sleepgraph/error.hpp"
#include "sleepgraph/forest.hpp"
#include "support.hpp"

using namespace sleepgraph;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Usage;
}

ForestConfig single_tree() {
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.min_samples_leaf = 1;
  cfg.features_per_split = 1;
  cfg.threads = 1;
  return cfg;
}

/// y = 3 x0 + N(0, 0.1); x0..x{width-1} independent standard normals.
TrainingMatrix linear_matrix(std::uint64_t seed, std::size_t rows = 200, std::size_t width = 5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0), eps(0.0, 0.1);
  TrainingMatrix m;
  for (std::size_t f = 0; f < width; ++f) m.feature_names.push_back("x" + std::to_string(f));
  m.target = "y";
  std::vector<double> row(width);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& v : row) v = n01(rng);
    m.add_row(row, 3.0 * row[0] + eps(rng));
  }
  return m;
}

double mse(const RandomForest& f, const TrainingMatrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double d = f.predict(m.row(i)) - m.y[i];
    s += d * d;
  }
  return s / static_cast<double>(m.rows());
}

double sum_scores(const ImportanceReport& r) {
  double s = 0.0;
  for (const auto& [_, v] : r.scores) s += v;
  return s;
}

}  // namespace

TEST(Forest, TwoPointHandExample) {
  TrainingMatrix m;
  m.feature_names = {"x"};
  m.target = "y";
  m.add_row(std::vector<double>{0.0}, 0.0);
  m.add_row(std::vector<double>{1.0}, 1.0);
  const auto f = fit_forest(m, single_tree());
  ASSERT_EQ(f.trees().size(), 1u);
  const auto& nodes = f.trees()[0].nodes();
  ASSERT_EQ(nodes.size(), 3u);
  EXPECT_EQ(nodes[0].feature, 0);
  EXPECT_EQ(nodes[0].threshold, 0.5);
  // SSE(parent) = 0.5, both children pure.
  EXPECT_EQ(nodes[0].impurity_decrease, 0.5);
  EXPECT_EQ(f.predict(std::vector<double>{0.0}), 0.0);
  EXPECT_EQ(f.predict(std::vector<double>{1.0}), 1.0);
  EXPECT_EQ(f.predict(std::vector<double>{0.4}), 0.0);
  const auto r = feature_importance(f);
  EXPECT_EQ(r.score("x"), 1.0);
}

TEST(Forest, SingleSplitGivesFullImportance) {
  TrainingMatrix m;
  m.feature_names = {"a", "b"};
  m.target = "y";
  m.add_row(std::vector<double>{0.0, 5.0}, 1.0);
  m.add_row(std::vector<double>{0.0, 5.0}, 1.0);
  m.add_row(std::vector<double>{1.0, 5.0}, 3.0);
  m.add_row(std::vector<double>{1.0, 5.0}, 3.0);
  auto cfg = single_tree();
  cfg.features_per_split = 2;
  const auto r = feature_importance(fit_forest(m, cfg));
  EXPECT_EQ(r.score("a"), 1.0);
  EXPECT_EQ(r.score("b"), 0.0);
}

TEST(Forest, ConstantTargetHasNoSplits) {
  auto m = linear_matrix(3, 40);
  std::fill(m.y.begin(), m.y.end(), 7.25);
  ForestConfig cfg;
  cfg.n_trees = 10;
  const auto f = fit_forest(m, cfg);
  for (const auto& t : f.trees()) EXPECT_TRUE(t.is_leaf());
  EXPECT_EQ(f.predict(m.row(0)), 7.25);
  EXPECT_EQ(code_of([&] { feature_importance(f); }), Errc::NoSplits);
}

TEST(Forest, WidthAndConfigErrors) {
  const auto m = linear_matrix(4, 30);
  ForestConfig cfg;
  cfg.n_trees = 5;
  const auto f = fit_forest(m, cfg);
  EXPECT_EQ(code_of([&] { f.predict(std::vector<double>{1.0, 2.0}); }), Errc::WidthMismatch);
  EXPECT_EQ(code_of([&] {
              TrainingMatrix bad = m;
              bad.add_row(std::vector<double>{1.0}, 1.0);
            }),
            Errc::WidthMismatch);
  cfg.n_trees = 0;
  EXPECT_EQ(code_of([&] { fit_forest(m, cfg); }), Errc::InvalidConfig);
  cfg.n_trees = 1;
  cfg.features_per_split = 9;
  EXPECT_EQ(code_of([&] { fit_forest(m, cfg); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([&] { fit_forest(TrainingMatrix{}, ForestConfig{}); }), Errc::InsufficientTrainingData);
}

TEST(Forest, DefaultFeaturesPerSplit) {
  ForestConfig cfg;
  EXPECT_EQ(cfg.features_for(1), 1u);
  EXPECT_EQ(cfg.features_for(5), 1u);
  EXPECT_EQ(cfg.features_for(12), 4u);
}

TEST(Forest, DeterministicUnderSeedAndThreads) {
  const auto m = linear_matrix(9);
  ForestConfig cfg;
  cfg.rng_seed = 17;
  cfg.threads = 1;
  const auto a = fit_forest(m, cfg);
  cfg.threads = 3;
  const auto b = fit_forest(m, cfg);
  EXPECT_EQ(forest_to_json(a).dump(), forest_to_json(b).dump());
  EXPECT_EQ(feature_importance(a), feature_importance(b));
  cfg.rng_seed = 18;
  EXPECT_NE(forest_to_json(fit_forest(m, cfg)).dump(), forest_to_json(a).dump());
}

TEST(Forest, PlantedLinearSignal) {
  const auto m = linear_matrix(21);
  ForestConfig cfg;
  cfg.rng_seed = 5;
  cfg.features_per_split = 2;
  const auto f = fit_forest(m, cfg);
  const auto r = feature_importance(f);
  EXPECT_EQ(r.ranked().front().first, "x0");
  EXPECT_GE(r.score("x0"), 0.6);
  EXPECT_NEAR(sum_scores(r), 1.0, 1e-9);
  for (const auto& [_, v] : r.scores) EXPECT_GE(v, 0.0);

  // Permutation importance oracle: shuffling x0 hurts the most.
  const double base = mse(f, m);
  std::vector<double> increase;
  std::mt19937_64 rng(1);
  for (std::size_t c = 0; c < m.width(); ++c) {
    auto p = m;
    std::vector<double> col(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) col[i] = m.x[i * m.width() + c];
    std::shuffle(col.begin(), col.end(), rng);
    for (std::size_t i = 0; i < m.rows(); ++i) p.x[i * m.width() + c] = col[i];
    increase.push_back(mse(f, p) - base);
  }
  EXPECT_EQ(std::max_element(increase.begin(), increase.end()) - increase.begin(), 0);
}

TEST(Forest, ExtraNoiseFeaturesKeepTopFeature) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ForestConfig cfg;
    cfg.rng_seed = seed;
    cfg.n_trees = 30;
    cfg.features_per_split = 2;
    const auto narrow = feature_importance(fit_forest(linear_matrix(seed, 150, 3), cfg));
    const auto wide = feature_importance(fit_forest(linear_matrix(seed, 150, 8), cfg));
    EXPECT_EQ(narrow.ranked().front().first, "x0");
    EXPECT_EQ(wide.ranked().front().first, "x0");
  }
}

TEST(Forest, ColumnPermutationSymmetry) {
  const auto m = linear_matrix(33, 120, 4);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  TrainingMatrix p;
  p.target = m.target;
  for (auto c : perm) p.feature_names.push_back(m.feature_names[c]);
  std::vector<double> row(m.width());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t c = 0; c < perm.size(); ++c) row[c] = m.x[i * m.width() + perm[c]];
    p.add_row(row, m.y[i]);
  }
  ForestConfig cfg;
  cfg.rng_seed = 8;
  cfg.n_trees = 40;
  cfg.features_per_split = 2;
  const auto a = feature_importance(fit_forest(m, cfg));
  const auto b = feature_importance(fit_forest(p, cfg));
  for (const auto& name : m.feature_names) EXPECT_NEAR(a.score(name), b.score(name), 1e-12) << name;
  EXPECT_EQ(a.ranked().front().first, b.ranked().front().first);
}

TEST(Forest, SyntheticCohortRecovery) {
  const auto run = sgtest::planted_run(42);
  const auto ranked = run.report.ranked();
  const std::set<std::string> top{ranked[0].first, ranked[1].first};
  EXPECT_EQ(top, (std::set<std::string>{"wakefulness_min", "hrv_ms"}));
  EXPECT_GE(ranked[0].second + ranked[1].second, 0.6);

  ForestConfig cfg;
  cfg.rng_seed = 42;
  const auto f = fit_forest(run.matrix, cfg);
  double mean = std::accumulate(run.matrix.y.begin(), run.matrix.y.end(), 0.0) / run.matrix.rows();
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < run.matrix.rows(); ++i) {
    const double d = f.predict(run.matrix.row(i)) - run.matrix.y[i];
    ss_res += d * d;
    ss_tot += (run.matrix.y[i] - mean) * (run.matrix.y[i] - mean);
  }
  EXPECT_GE(1.0 - ss_res / ss_tot, 0.8);
}

TEST(TrainingSet, ProvenanceIsQueryPlusNearestPatients) {
  SynthSpec spec;
  spec.n_patients = 6;
  spec.days_per_patient = 30;
  const auto r = generate(spec);
  const auto stdz = fit_standardizer(r.dataset);
  const auto g = build_graph(r.dataset, stdz);
  const ParsedQuery q{"P02", spec.start_date, "sleep_score", ""};
  const auto m = assemble_training_set(g, r.dataset, q, 2);
  std::set<std::string> expected{"P02"};
  for (const auto& n : nearest_patients(g, "P02", 2).items) expected.insert(n.id);
  std::set<std::string> seen;
  for (const auto& k : m.provenance) seen.insert(k.patient_id);
  EXPECT_EQ(seen, expected);
  EXPECT_EQ(m.rows(), 90u);
  EXPECT_EQ(std::count(m.feature_names.begin(), m.feature_names.end(), "sleep_score"), 0);
  EXPECT_EQ(m.width(), g.dimension_names().size() - 1);

  const auto own = assemble_training_set(g, r.dataset, q, 0);
  EXPECT_EQ(own.rows(), 30u);
  EXPECT_EQ(assemble_training_set(g, r.dataset, q, 50).patients.size(), 6u);
  EXPECT_EQ(code_of([&] { assemble_training_set(g, r.dataset, q, 0, 31); }), Errc::InsufficientTrainingData);
}

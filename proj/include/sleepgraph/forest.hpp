#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleepgraph/graph.hpp"
#include "sleepgraph/ingest.hpp"
#include "sleepgraph/parse.hpp"

namespace sleepgraph {

/// Row-major predictor matrix with a real-valued target.
struct TrainingMatrix {
  std::vector<std::string> feature_names;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<DayKey> provenance;
  std::string target;
  /// Query patient first, then the neighbours that contributed rows.
  std::vector<std::string> patients;

  std::size_t rows() const noexcept { return y.size(); }
  std::size_t width() const noexcept { return feature_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * width(), width()};
  }
  void add_row(std::span<const double> values, double target_value, DayKey source = {});
};

struct ForestConfig {
  std::size_t n_trees = 100;
  std::optional<std::size_t> max_depth;           // unlimited when empty
  std::size_t min_samples_leaf = 2;
  std::optional<std::size_t> features_per_split;  // max(1, floor(d / 3)) when empty
  bool bootstrap = true;
  std::uint64_t rng_seed = 0;
  std::size_t min_rows = 20;   // enforced by assemble_training_set
  std::size_t threads = 0;     // 0: hardware concurrency

  std::size_t features_for(std::size_t width) const;
  /// Throws InvalidConfig.
  void validate(std::size_t width) const;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of the node's samples
  std::size_t samples = 0;
  double impurity_decrease = 0.0;  // SSE(parent) - SSE(left) - SSE(right)
};

class RegressionTree {
 public:
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  bool is_leaf() const noexcept { return nodes_.size() == 1; }
  double predict(std::span<const double> x) const;

 private:
  std::vector<TreeNode> nodes_;
};

class RandomForest {
 public:
  RandomForest(std::vector<RegressionTree> trees, std::vector<std::string> feature_names,
               std::string target, std::size_t n_rows, std::vector<std::string> patients);

  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::string& target() const noexcept { return target_; }
  std::size_t n_rows() const noexcept { return n_rows_; }
  const std::vector<std::string>& patients() const noexcept { return patients_; }

  /// Mean of per-tree predictions. Throws WidthMismatch.
  double predict(std::span<const double> x) const;

 private:
  std::vector<RegressionTree> trees_;
  std::vector<std::string> feature_names_;
  std::string target_;
  std::size_t n_rows_;
  std::vector<std::string> patients_;
};

struct ImportanceReport {
  std::vector<std::pair<std::string, double>> scores;  // feature order
  std::string target;
  std::size_t n_rows = 0;
  std::vector<std::string> neighbor_patients;

  /// Descending by score, ties by feature name.
  std::vector<std::pair<std::string, double>> ranked() const;
  double score(std::string_view feature) const;
  /// Stable identifier used in prompt provenance.
  std::string id() const;

  bool operator==(const ImportanceReport&) const = default;
};

/// Rows: every day of the query patient and of its `n_neighbors` graph-nearest
/// patients where the target is present. Predictors are the graph's day
/// vectors without the target dimension. Throws InsufficientTrainingData.
TrainingMatrix assemble_training_set(const SimilarityGraph& g, const Dataset& dataset,
                                     const ParsedQuery& q, std::size_t n_neighbors,
                                     std::size_t min_rows = 20);

/// Seeded CART regression forest: per-tree bootstrap, `features_per_split`
/// candidate features per node, splits at midpoints by maximum variance
/// reduction.
RandomForest fit_forest(const TrainingMatrix& m, const ForestConfig& cfg);

/// Mean decrease in impurity, normalised to sum 1. Throws NoSplits when every
/// tree is a single leaf.
ImportanceReport feature_importance(const RandomForest& forest);

nlohmann::ordered_json forest_to_json(const RandomForest& forest);

}  // namespace sleepgraph

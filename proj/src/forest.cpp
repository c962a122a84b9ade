#include "sleepgraph/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <thread>

#include "sleepgraph/error.hpp"
#include "sleepgraph/hash.hpp"

namespace sleepgraph {

void TrainingMatrix::add_row(std::span<const double> values, double target_value, DayKey source) {
  if (values.size() != width())
    throw Error(Errc::WidthMismatch, "row width " + std::to_string(values.size()) +
                                         ", expected " + std::to_string(width()));
  x.insert(x.end(), values.begin(), values.end());
  y.push_back(target_value);
  provenance.push_back(std::move(source));
}

std::size_t ForestConfig::features_for(std::size_t width) const {
  return features_per_split.value_or(std::max<std::size_t>(1, width / 3));
}

void ForestConfig::validate(std::size_t width) const {
  if (n_trees < 1) throw Error(Errc::InvalidConfig, "n_trees must be >= 1");
  if (min_samples_leaf < 1) throw Error(Errc::InvalidConfig, "min_samples_leaf must be >= 1");
  const auto m = features_for(width);
  if (m < 1 || m > width)
    throw Error(Errc::InvalidConfig, "features_per_split " + std::to_string(m) +
                                         " outside [1, " + std::to_string(width) + "]");
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

RandomForest::RandomForest(std::vector<RegressionTree> trees, std::vector<std::string> feature_names,
                           std::string target, std::size_t n_rows, std::vector<std::string> patients)
    : trees_(std::move(trees)),
      feature_names_(std::move(feature_names)),
      target_(std::move(target)),
      n_rows_(n_rows),
      patients_(std::move(patients)) {}

double RandomForest::predict(std::span<const double> x) const {
  if (x.size() != feature_names_.size())
    throw Error(Errc::WidthMismatch, "input width " + std::to_string(x.size()) + ", expected " +
                                         std::to_string(feature_names_.size()));
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t left_count = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingMatrix& m, const ForestConfig& cfg, std::uint64_t tree_seed,
              const std::vector<std::uint64_t>& name_hashes, const std::vector<std::size_t>& name_order)
      : m_(m),
        cfg_(cfg),
        seed_(tree_seed),
        name_hashes_(name_hashes),
        name_order_(name_order),
        per_split_(cfg.features_for(m.width())) {}

  RegressionTree build(std::vector<std::size_t> sample) {
    nodes_.clear();
    grow(sample, 0, 1);
    return RegressionTree(std::move(nodes_));
  }

 private:
  int grow(std::vector<std::size_t>& idx, std::size_t depth, std::uint64_t path) {
    const auto n = idx.size();
    double sum = 0.0;
    bool constant = true;
    for (auto i : idx) {
      sum += m_.y[i];
      constant = constant && m_.y[i] == m_.y[idx.front()];
    }
    const double mean = sum / static_cast<double>(n);
    double sse = 0.0;
    for (auto i : idx) sse += (m_.y[i] - mean) * (m_.y[i] - mean);

    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, constant ? m_.y[idx.front()] : mean, n, 0.0});

    const bool depth_capped = cfg_.max_depth && depth >= *cfg_.max_depth;
    if (depth_capped || n < 2 * cfg_.min_samples_leaf || constant) return self;

    const auto best = best_split(idx, mean, sse, path);
    if (best.feature < 0 || !(best.gain > 1e-12 * sse)) return self;

    const auto f = static_cast<std::size_t>(best.feature);
    std::vector<std::size_t> left, right;
    left.reserve(best.left_count);
    right.reserve(n - best.left_count);
    for (auto i : idx) (m_.x[i * m_.width() + f] <= best.threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();

    const int l = grow(left, depth + 1, hash_combine(path, 0));
    const int r = grow(right, depth + 1, hash_combine(path, 1));
    auto& node = nodes_[static_cast<std::size_t>(self)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    node.impurity_decrease = best.gain;
    return self;
  }

  // Candidate features: the per_split_ smallest keyed priorities, where the key
  // depends on (tree seed, node path, feature name) only.
  std::vector<std::size_t> draw_features(std::uint64_t path) const {
    const auto node_key = hash_combine(seed_, path);
    std::vector<std::pair<std::uint64_t, std::size_t>> prio;
    prio.reserve(m_.width());
    for (std::size_t f = 0; f < m_.width(); ++f)
      prio.emplace_back(hash_combine(node_key, name_hashes_[f]), f);
    std::sort(prio.begin(), prio.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return m_.feature_names[a.second] < m_.feature_names[b.second];
    });
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < per_split_; ++i) chosen.push_back(prio[i].second);
    // Evaluate in name order so cross-feature ties resolve by name.
    std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
      return name_order_[a] < name_order_[b];
    });
    return chosen;
  }

  SplitCandidate best_split(const std::vector<std::size_t>& idx, double mean, double sse,
                            std::uint64_t path) const {
    const auto n = idx.size();
    const auto min_leaf = cfg_.min_samples_leaf;
    SplitCandidate best;
    std::vector<std::pair<double, std::size_t>> col(n);
    for (auto f : draw_features(path)) {
      for (std::size_t k = 0; k < n; ++k) col[k] = {m_.x[idx[k] * m_.width() + f], idx[k]};
      std::sort(col.begin(), col.end());
      if (col.front().first == col.back().first) continue;

      double total = 0.0, total_sq = 0.0;
      for (const auto& [_, i] : col) {
        const double c = m_.y[i] - mean;
        total += c;
        total_sq += c * c;
      }
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const double c = m_.y[col[k].second] - mean;
        left_sum += c;
        left_sq += c * c;
        const auto nl = k + 1;
        const auto nr = n - nl;
        if (col[k].first == col[k + 1].first) continue;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double sse_l = left_sq - left_sum * left_sum / static_cast<double>(nl);
        const double right_sum = total - left_sum;
        const double sse_r = (total_sq - left_sq) - right_sum * right_sum / static_cast<double>(nr);
        const double gain = sse - sse_l - sse_r;
        if (gain > best.gain) {
          double thr = 0.5 * (col[k].first + col[k + 1].first);
          if (!(thr < col[k + 1].first)) thr = col[k].first;
          best = {static_cast<int>(f), thr, gain, nl};
        }
      }
    }
    return best;
  }

  const TrainingMatrix& m_;
  const ForestConfig& cfg_;
  std::uint64_t seed_;
  const std::vector<std::uint64_t>& name_hashes_;
  const std::vector<std::size_t>& name_order_;
  std::size_t per_split_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

RandomForest fit_forest(const TrainingMatrix& m, const ForestConfig& cfg) {
  if (m.rows() == 0) throw Error(Errc::InsufficientTrainingData, "training matrix has no rows");
  if (m.width() == 0) throw Error(Errc::InsufficientTrainingData, "training matrix has no features");
  if (m.x.size() != m.rows() * m.width())
    throw Error(Errc::WidthMismatch, "matrix storage does not match rows x width");
  for (double v : m.y)
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, "non-finite target value");
  cfg.validate(m.width());

  std::vector<std::uint64_t> name_hashes;
  for (const auto& name : m.feature_names) name_hashes.push_back(fnv1a64(name));
  std::vector<std::size_t> by_name(m.width());
  std::iota(by_name.begin(), by_name.end(), 0);
  std::sort(by_name.begin(), by_name.end(),
            [&](std::size_t a, std::size_t b) { return m.feature_names[a] < m.feature_names[b]; });
  std::vector<std::size_t> name_order(m.width());
  for (std::size_t r = 0; r < by_name.size(); ++r) name_order[by_name[r]] = r;

  std::vector<std::optional<RegressionTree>> trees(cfg.n_trees);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < cfg.n_trees; t = next++) {
      const auto tree_seed = hash_combine(cfg.rng_seed, t);
      std::vector<std::size_t> sample(m.rows());
      if (cfg.bootstrap) {
        std::mt19937_64 rng(tree_seed);
        std::uniform_int_distribution<std::size_t> pick(0, m.rows() - 1);
        for (auto& s : sample) s = pick(rng);
      } else {
        std::iota(sample.begin(), sample.end(), 0);
      }
      TreeBuilder builder(m, cfg, tree_seed, name_hashes, name_order);
      trees[t].emplace(builder.build(std::move(sample)));
    }
  };
  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, cfg.n_trees);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<RegressionTree> out;
  out.reserve(trees.size());
  for (auto& t : trees) out.push_back(std::move(*t));
  return RandomForest(std::move(out), m.feature_names, m.target, m.rows(), m.patients);
}

std::vector<std::pair<std::string, double>> ImportanceReport::ranked() const {
  auto r = scores;
  std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return r;
}

double ImportanceReport::score(std::string_view feature) const {
  for (const auto& [f, s] : scores)
    if (f == feature) return s;
  return 0.0;
}

std::string ImportanceReport::id() const {
  std::uint64_t h = fnv1a64(target);
  h = hash_combine(h, n_rows);
  for (const auto& p : neighbor_patients) h = hash_combine(h, fnv1a64(p));
  for (const auto& [f, s] : scores) {
    h = hash_combine(h, fnv1a64(f));
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof s);
    std::memcpy(&bits, &s, sizeof bits);
    h = hash_combine(h, bits);
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "importance-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ImportanceReport feature_importance(const RandomForest& forest) {
  const auto& names = forest.feature_names();
  std::vector<double> totals(names.size(), 0.0);
  bool any_split = false;
  for (const auto& tree : forest.trees())
    for (const auto& node : tree.nodes())
      if (node.feature >= 0) {
        totals[static_cast<std::size_t>(node.feature)] += node.impurity_decrease;
        any_split = true;
      }
  double grand = 0.0;
  for (double t : totals) grand += t;
  if (!any_split || !(grand > 0.0))
    throw Error(Errc::NoSplits, "every tree is a single leaf (constant target?)");

  ImportanceReport report;
  report.target = forest.target();
  report.n_rows = forest.n_rows();
  if (forest.patients().size() > 1)
    report.neighbor_patients.assign(forest.patients().begin() + 1, forest.patients().end());
  for (std::size_t i = 0; i < names.size(); ++i)
    report.scores.emplace_back(names[i], totals[i] / grand);
  return report;
}

TrainingMatrix assemble_training_set(const SimilarityGraph& g, const Dataset& dataset,
                                     const ParsedQuery& q, std::size_t n_neighbors,
                                     std::size_t min_rows) {
  const auto& dims = g.dimension_names();
  const auto target_it = std::find(dims.begin(), dims.end(), q.metric);
  if (std::find(dataset.feature_schema().begin(), dataset.feature_schema().end(), q.metric) ==
      dataset.feature_schema().end())
    throw Error(Errc::UnknownMetric, q.metric);
  const auto target_dim = target_it == dims.end()
                              ? std::optional<std::size_t>{}
                              : std::optional<std::size_t>(static_cast<std::size_t>(target_it - dims.begin()));

  TrainingMatrix m;
  m.target = q.metric;
  for (std::size_t d = 0; d < dims.size(); ++d)
    if (d != target_dim) m.feature_names.push_back(dims[d]);

  std::vector<std::string> patients{g.patient(q.patient_id).patient_id};
  for (const auto& nb : nearest_patients(g, q.patient_id, n_neighbors).items) patients.push_back(nb.id);

  std::vector<double> row(m.width());
  for (const auto& pid : patients) {
    const auto& node = g.patient(pid);
    for (std::size_t i = 0; i < node.dates.size(); ++i) {
      const DayKey key{pid, node.dates[i]};
      const auto* rec = dataset.find_day(key);
      if (!rec) continue;
      auto y = rec->metric(q.metric);
      if (!y) continue;
      std::size_t c = 0;
      for (std::size_t d = 0; d < dims.size(); ++d)
        if (d != target_dim) row[c++] = node.days[i].values[d];
      m.add_row(row, *y, key);
    }
  }
  m.patients = std::move(patients);
  if (m.rows() < min_rows)
    throw Error(Errc::InsufficientTrainingData,
                std::to_string(m.rows()) + " rows, need " + std::to_string(min_rows));
  return m;
}

nlohmann::ordered_json forest_to_json(const RandomForest& forest) {
  nlohmann::ordered_json out;
  out["target"] = forest.target();
  out["features"] = forest.feature_names();
  out["n_rows"] = forest.n_rows();
  auto trees = nlohmann::ordered_json::array();
  for (const auto& t : forest.trees()) {
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes()) {
      nlohmann::ordered_json nj;
      if (n.feature >= 0) {
        nj["feature"] = forest.feature_names()[static_cast<std::size_t>(n.feature)];
        nj["threshold"] = n.threshold;
        nj["left"] = n.left;
        nj["right"] = n.right;
        nj["impurity_decrease"] = n.impurity_decrease;
      }
      nj["value"] = n.value;
      nj["samples"] = n.samples;
      nodes.push_back(std::move(nj));
    }
    trees.push_back(std::move(nodes));
  }
  out["trees"] = std::move(trees);
  return out;
}

}  // namespace sleepgraph

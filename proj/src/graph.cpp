#include "sleepgraph/graph.hpp"

#include <algorithm>
#include <cmath>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(Errc::LengthMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine(const FeatureVector& a, const FeatureVector& b) {
  return cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

std::optional<std::size_t> SimilarityGraph::PatientNode::day_index(const Date& date) const {
  auto it = std::lower_bound(dates.begin(), dates.end(), date);
  if (it == dates.end() || *it != date) return std::nullopt;
  return static_cast<std::size_t>(it - dates.begin());
}

SimilarityGraph::SimilarityGraph(std::vector<std::string> dimension_names,
                                 std::vector<PatientNode> patients)
    : dimensions_(std::move(dimension_names)),
      schema_tag_(schema_tag_for(dimensions_)),
      patients_(std::move(patients)) {
  std::sort(patients_.begin(), patients_.end(),
            [](const PatientNode& a, const PatientNode& b) { return a.patient_id < b.patient_id; });
  const auto n = patients_.size();
  inter_.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    inter_[a * n + a] = cosine(patients_[a].mean, patients_[a].mean);
    for (std::size_t b = a + 1; b < n; ++b) {
      const double w = cosine(patients_[a].mean, patients_[b].mean);
      inter_[a * n + b] = w;
      inter_[b * n + a] = w;
    }
  }
}

std::optional<std::size_t> SimilarityGraph::patient_index(std::string_view patient_id) const {
  auto it = std::lower_bound(
      patients_.begin(), patients_.end(), patient_id,
      [](const PatientNode& p, std::string_view id) { return p.patient_id < id; });
  if (it == patients_.end() || it->patient_id != patient_id) return std::nullopt;
  return static_cast<std::size_t>(it - patients_.begin());
}

const SimilarityGraph::PatientNode& SimilarityGraph::patient(std::string_view patient_id) const {
  auto idx = patient_index(patient_id);
  if (!idx) throw Error(Errc::UnknownNode, "patient " + std::string(patient_id));
  return patients_[*idx];
}

const FeatureVector& SimilarityGraph::day_vector(const DayKey& key) const {
  const auto& p = patient(key.patient_id);
  auto idx = p.day_index(key.date);
  if (!idx) throw Error(Errc::UnknownNode, "day " + key.node_id());
  return p.days[*idx];
}

std::size_t SimilarityGraph::day_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : patients_) n += p.days.size();
  return n;
}

SimilarityGraph build_graph(const Dataset& dataset, const Standardizer& std,
                            const AnnotationMap& annotations) {
  if (dataset.days().empty()) throw Error(Errc::EmptyDataset, "dataset has no day records");

  std::optional<ThemeSet> themes;
  if (!annotations.empty()) {
    std::vector<std::string> labels;
    for (const auto& [label, _] : annotations.begin()->second.theme_scores) labels.push_back(label);
    themes.emplace(std::move(labels));
  }
  auto dims = dimension_names(std, themes ? &*themes : nullptr);

  std::vector<SimilarityGraph::PatientNode> nodes;
  for (const auto& [pid, _] : dataset.demographics()) {
    auto records = dataset.days_of(pid);
    if (records.empty()) continue;

    SimilarityGraph::PatientNode node;
    node.patient_id = pid;
    for (const auto* rec : records) {
      const Annotation* ann = nullptr;
      if (themes) {
        auto it = annotations.find(rec->key());
        if (it == annotations.end())
          throw Error(Errc::SchemaMismatch, "no annotation for day " + rec->key().node_id());
        ann = &it->second;
      }
      node.dates.push_back(rec->date);
      node.days.push_back(vectorize_day(*rec, std, ann));
      if (node.days.back().size() != dims.size())
        throw Error(Errc::SchemaMismatch, "inconsistent vector width for " + rec->key().node_id());
    }

    node.mean.values.assign(dims.size(), 0.0);
    for (const auto& v : node.days)
      for (std::size_t i = 0; i < dims.size(); ++i) node.mean.values[i] += v.values[i];
    for (auto& x : node.mean.values) x /= static_cast<double>(node.days.size());
    node.mean.schema_tag = node.days.front().schema_tag;

    const auto n = node.days.size();
    node.intra.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      node.intra[i * n + i] = cosine(node.days[i], node.days[i]);
      for (std::size_t j = i + 1; j < n; ++j) {
        const double w = cosine(node.days[i], node.days[j]);
        node.intra[i * n + j] = w;
        node.intra[j * n + i] = w;
      }
    }
    nodes.push_back(std::move(node));
  }
  return SimilarityGraph(std::move(dims), std::move(nodes));
}

namespace {

enum class Order { Descending, Ascending };

void rank(std::vector<Neighbor>& items, std::size_t k, Order order) {
  auto cmp = [order](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity)
      return order == Order::Descending ? a.similarity > b.similarity : a.similarity < b.similarity;
    return a.id < b.id;
  };
  const auto keep = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(keep), items.end(), cmp);
  items.resize(keep);
}

NeighborResult rank_days(const SimilarityGraph& g, std::string_view patient, const Date& date,
                         std::size_t k, Order order) {
  const auto& node = g.patient(patient);
  auto q = node.day_index(date);
  if (!q) throw Error(Errc::UnknownNode, "day " + DayKey{std::string(patient), date}.node_id());

  NeighborResult result{DayKey{node.patient_id, date}.node_id(), k, {}};
  result.items.reserve(node.dates.size());
  for (std::size_t j = 0; j < node.dates.size(); ++j) {
    if (j == *q) continue;
    result.items.push_back({DayKey{node.patient_id, node.dates[j]}.node_id(),
                            node.intra_weight(*q, j), node.dates[j]});
  }
  rank(result.items, k, order);
  return result;
}

}  // namespace

NeighborResult similar_days(const SimilarityGraph& g, std::string_view patient, const Date& date,
                            std::size_t k) {
  return rank_days(g, patient, date, k, Order::Descending);
}

NeighborResult dissimilar_days(const SimilarityGraph& g, std::string_view patient,
                               const Date& date, std::size_t k) {
  return rank_days(g, patient, date, k, Order::Ascending);
}

NeighborResult nearest_patients(const SimilarityGraph& g, std::string_view patient, std::size_t k) {
  auto q = g.patient_index(patient);
  if (!q) throw Error(Errc::UnknownNode, "patient " + std::string(patient));
  NeighborResult result{std::string(patient), k, {}};
  for (std::size_t j = 0; j < g.patients().size(); ++j) {
    if (j == *q) continue;
    result.items.push_back({g.patients()[j].patient_id, g.inter_weight(*q, j), std::nullopt});
  }
  rank(result.items, k, Order::Descending);
  return result;
}

nlohmann::ordered_json graph_to_json(const SimilarityGraph& g) {
  nlohmann::ordered_json out;
  out["schema_tag"] = g.schema_tag();
  out["dimensions"] = g.dimension_names();
  auto patients = nlohmann::ordered_json::array();
  for (const auto& p : g.patients()) {
    nlohmann::ordered_json pj;
    pj["id"] = p.patient_id;
    pj["vector"] = p.mean.values;
    auto days = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < p.dates.size(); ++i)
      days.push_back({{"id", DayKey{p.patient_id, p.dates[i]}.node_id()},
                      {"date", p.dates[i].iso()},
                      {"vector", p.days[i].values}});
    pj["days"] = std::move(days);
    auto edges = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < p.dates.size(); ++i)
      for (std::size_t j = i + 1; j < p.dates.size(); ++j)
        edges.push_back({p.dates[i].iso(), p.dates[j].iso(), p.intra_weight(i, j)});
    pj["intra_edges"] = std::move(edges);
    patients.push_back(std::move(pj));
  }
  out["patients"] = std::move(patients);
  auto inter = nlohmann::ordered_json::array();
  const auto& ps = g.patients();
  for (std::size_t a = 0; a < ps.size(); ++a)
    for (std::size_t b = a + 1; b < ps.size(); ++b)
      inter.push_back({ps[a].patient_id, ps[b].patient_id, g.inter_weight(a, b)});
  out["inter_edges"] = std::move(inter);
  return out;
}

}  // namespace sleepgraph

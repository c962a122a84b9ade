#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleepgraph/annotate.hpp"
#include "sleepgraph/ingest.hpp"

namespace sleepgraph {

using AnnotationMap = std::map<DayKey, Annotation>;

/// sum(a_i b_i) / (|a| |b|), clamped to [-1, 1]; 0 when either norm is 0.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const FeatureVector& a, const FeatureVector& b);

struct Neighbor {
  std::string id;
  double similarity = 0.0;
  std::optional<Date> date;  // set for day nodes

  bool operator==(const Neighbor&) const = default;
};

struct NeighborResult {
  std::string query;
  std::size_t k = 0;
  std::vector<Neighbor> items;
};

/// Patient nodes with day sub-nodes. Intra-patient (day-day) and
/// inter-patient weights are stored densely and mirrored, so w(a,b) == w(b,a)
/// bitwise.
class SimilarityGraph {
 public:
  struct PatientNode {
    std::string patient_id;
    FeatureVector mean;              // component-wise mean of the day vectors
    std::vector<Date> dates;         // ascending
    std::vector<FeatureVector> days; // parallel to dates
    std::vector<double> intra;       // n x n, row-major

    double intra_weight(std::size_t i, std::size_t j) const { return intra[i * dates.size() + j]; }
    std::optional<std::size_t> day_index(const Date& date) const;
  };

  SimilarityGraph(std::vector<std::string> dimension_names, std::vector<PatientNode> patients);

  const std::vector<std::string>& dimension_names() const noexcept { return dimensions_; }
  const std::string& schema_tag() const noexcept { return schema_tag_; }
  const std::vector<PatientNode>& patients() const noexcept { return patients_; }

  std::optional<std::size_t> patient_index(std::string_view patient_id) const;
  /// Throws UnknownNode.
  const PatientNode& patient(std::string_view patient_id) const;
  const FeatureVector& day_vector(const DayKey& key) const;
  double inter_weight(std::size_t a, std::size_t b) const { return inter_[a * patients_.size() + b]; }

  std::size_t day_count() const noexcept;

 private:
  std::vector<std::string> dimensions_;
  std::string schema_tag_;
  std::vector<PatientNode> patients_;  // sorted by id
  std::vector<double> inter_;          // P x P, row-major
};

/// With a non-empty `annotations`, every day must have an entry and the
/// annotation dimensions are appended to each day vector.
SimilarityGraph build_graph(const Dataset& dataset, const Standardizer& std,
                            const AnnotationMap& annotations = {});

/// Top-k other days of the same patient, similarity descending, ties by node id.
NeighborResult similar_days(const SimilarityGraph& g, std::string_view patient, const Date& date,
                            std::size_t k);
/// Bottom-k other days of the same patient, similarity ascending, ties by node id.
NeighborResult dissimilar_days(const SimilarityGraph& g, std::string_view patient,
                               const Date& date, std::size_t k);
/// Top-k other patients by patient-node cosine.
NeighborResult nearest_patients(const SimilarityGraph& g, std::string_view patient, std::size_t k);

/// Nodes, vectors and edge lists (i < j) for inspection and golden tests.
nlohmann::ordered_json graph_to_json(const SimilarityGraph& g);

}  // namespace sleepgraph

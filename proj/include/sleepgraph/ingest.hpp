#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "sleepgraph/annotate.hpp"
#include "sleepgraph/date.hpp"

namespace sleepgraph {

/// sleep_score, sleep_duration_min, wakefulness_min, rem_min, hrv_ms, activity_score.
const std::vector<std::string>& canonical_features();

struct Demographics {
  std::string patient_id;
  int age = 0;
  std::string gender;  // one of allowed_genders()
  std::string ethnicity;

  bool operator==(const Demographics&) const = default;
};

const std::vector<std::string>& allowed_genders();

struct DayKey {
  std::string patient_id;
  Date date;

  auto operator<=>(const DayKey&) const = default;

  /// "<patient>/<YYYY-MM-DD>"; lexicographic order equals (patient, date) order.
  std::string node_id() const { return patient_id + "/" + date.iso(); }
};

struct DayRecord {
  std::string patient_id;
  Date date;
  std::map<std::string, std::optional<double>> metrics;
  std::optional<std::string> journal;

  DayKey key() const { return {patient_id, date}; }
  std::optional<double> metric(const std::string& name) const;

  bool operator==(const DayRecord&) const = default;
};

/// Reason a record violates the schema or a metric range, or nullopt.
std::optional<std::string> validate_day(const DayRecord& record,
                                        const std::vector<std::string>& schema);

/// Patient demographics and day records indexed by patient id and date.
/// Populate with add_patient/add_day, then treat as read-only.
class Dataset {
 public:
  explicit Dataset(std::vector<std::string> feature_schema = canonical_features());

  void add_patient(Demographics demo);
  void add_day(DayRecord record);

  const std::vector<std::string>& feature_schema() const noexcept { return schema_; }
  const std::map<std::string, Demographics>& demographics() const noexcept { return demographics_; }
  const std::map<DayKey, DayRecord>& days() const noexcept { return days_; }

  const Demographics* find_patient(std::string_view patient_id) const;
  const DayRecord* find_day(const DayKey& key) const;
  /// Case-insensitive lookup; returns the stored id.
  std::optional<std::string> canonical_patient_id(std::string_view patient_id) const;
  /// Date-ordered days of one patient.
  std::vector<const DayRecord*> days_of(std::string_view patient_id) const;

 private:
  std::vector<std::string> schema_;
  std::map<std::string, Demographics> demographics_;
  std::map<DayKey, DayRecord> days_;
};

/// Demographics CSV (`patient_id,age,gender,ethnicity`) + days JSONL.
Dataset load_dataset(const std::filesystem::path& demographics_path,
                     const std::filesystem::path& days_path,
                     std::vector<std::string> feature_schema = canonical_features());

Dataset load_dataset_from_streams(std::istream& demographics, std::istream& days,
                                  std::vector<std::string> feature_schema = canonical_features(),
                                  std::string_view demographics_name = "demographics",
                                  std::string_view days_name = "days");

void write_demographics_csv(const Dataset& dataset, std::ostream& out);
/// Keys in documented order; metrics in schema order.
void write_days_jsonl(const Dataset& dataset, std::ostream& out);

struct FeatureStats {
  std::string name;
  double mean = 0.0;
  double std = 1.0;  // population standard deviation, > 0
};

/// Global per-feature z-score transform fitted over every non-missing value.
class Standardizer {
 public:
  Standardizer(std::vector<std::string> source_schema, std::vector<FeatureStats> features,
               std::vector<std::string> dropped);

  /// Declared dataset schema the standardizer was fitted against.
  const std::vector<std::string>& source_schema() const noexcept { return source_schema_; }
  /// Retained (non-constant) features, in schema order.
  const std::vector<FeatureStats>& features() const noexcept { return features_; }
  const std::vector<std::string>& dropped() const noexcept { return dropped_; }

  std::vector<std::string> feature_names() const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  double transform(std::size_t index, double value) const;

 private:
  std::vector<std::string> source_schema_;
  std::vector<FeatureStats> features_;
  std::vector<std::string> dropped_;
};

Standardizer fit_standardizer(const Dataset& dataset);

struct FeatureVector {
  std::vector<double> values;
  std::string schema_tag;

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const FeatureVector&) const = default;
};

/// Names of every vector dimension: retained features, then (with themes)
/// `journal_sentiment` and `theme_<label>` per theme.
std::vector<std::string> dimension_names(const Standardizer& std, const ThemeSet* themes);

/// Stable tag identifying a dimension ordering.
std::string schema_tag_for(const std::vector<std::string>& dimension_names);

/// z-scored metrics (missing -> 0), followed by the annotation's sentiment and
/// theme scores when one is supplied.
FeatureVector vectorize_day(const DayRecord& record, const Standardizer& std,
                            const Annotation* annotation = nullptr);

}  // namespace sleepgraph

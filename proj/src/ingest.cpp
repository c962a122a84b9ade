#include "sleepgraph/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sleepgraph/error.hpp"
#include "sleepgraph/hash.hpp"

namespace sleepgraph {

namespace {

struct Range {
  double lo;
  double hi;
};

std::optional<Range> canonical_range(std::string_view name) {
  if (name == "sleep_score") return Range{0.0, 100.0};
  if (name == "sleep_duration_min" || name == "wakefulness_min" || name == "rem_min" ||
      name == "hrv_ms" || name == "activity_score")
    return Range{0.0, INFINITY};
  return std::nullopt;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// RFC 4180 field split for a single line (no embedded newlines).
std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty() || field_was_quoted) return std::nullopt;
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_was_quoted = false;
    } else {
      if (field_was_quoted) return std::nullopt;
      cur.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

[[noreturn]] void malformed(std::string_view file, std::size_t line, const std::string& reason) {
  throw Error(Errc::MalformedRow, std::string(file) + ":" + std::to_string(line) + ": " + reason);
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace

const std::vector<std::string>& canonical_features() {
  static const std::vector<std::string> kFeatures{"sleep_score", "sleep_duration_min",
                                                  "wakefulness_min", "rem_min",
                                                  "hrv_ms", "activity_score"};
  return kFeatures;
}

const std::vector<std::string>& allowed_genders() {
  static const std::vector<std::string> kGenders{"female", "male", "nonbinary", "other",
                                                 "unknown"};
  return kGenders;
}

std::optional<double> DayRecord::metric(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> validate_day(const DayRecord& record,
                                        const std::vector<std::string>& schema) {
  if (record.patient_id.empty()) return "empty patient_id";
  for (const auto& [name, value] : record.metrics) {
    if (std::find(schema.begin(), schema.end(), name) == schema.end())
      return "feature '" + name + "' is not in the feature schema";
    if (!value) continue;
    if (!std::isfinite(*value)) return "feature '" + name + "' is not finite";
    if (auto range = canonical_range(name); range && (*value < range->lo || *value > range->hi)) {
      std::ostringstream os;
      os << "feature '" << name << "' value " << *value << " outside [" << range->lo << ", "
         << range->hi << "]";
      return os.str();
    }
  }
  return std::nullopt;
}

Dataset::Dataset(std::vector<std::string> feature_schema) : schema_(std::move(feature_schema)) {
  if (schema_.empty()) throw Error(Errc::SchemaMismatch, "feature schema is empty");
  std::vector<std::string> sorted = schema_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error(Errc::SchemaMismatch, "feature schema has duplicate names");
}

void Dataset::add_patient(Demographics demo) {
  if (demo.patient_id.empty()) throw Error(Errc::MalformedRow, "empty patient_id");
  if (demo.age < 10 || demo.age > 120)
    throw Error(Errc::MalformedRow, "age " + std::to_string(demo.age) + " outside [10, 120]");
  if (std::find(allowed_genders().begin(), allowed_genders().end(), demo.gender) ==
      allowed_genders().end())
    throw Error(Errc::MalformedRow, "unknown gender '" + demo.gender + "'");
  if (canonical_patient_id(demo.patient_id))
    throw Error(Errc::DuplicateKey, demo.patient_id);
  auto id = demo.patient_id;
  demographics_.emplace(std::move(id), std::move(demo));
}

void Dataset::add_day(DayRecord record) {
  if (auto reason = validate_day(record, schema_)) throw Error(Errc::MalformedRow, *reason);
  if (!demographics_.contains(record.patient_id))
    throw Error(Errc::UnknownPatient, record.patient_id);
  auto key = record.key();
  if (days_.contains(key))
    throw Error(Errc::DuplicateKey, key.patient_id + ", " + key.date.iso());
  days_.emplace(std::move(key), std::move(record));
}

const Demographics* Dataset::find_patient(std::string_view patient_id) const {
  auto it = demographics_.find(std::string(patient_id));
  return it == demographics_.end() ? nullptr : &it->second;
}

const DayRecord* Dataset::find_day(const DayKey& key) const {
  auto it = days_.find(key);
  return it == days_.end() ? nullptr : &it->second;
}

std::optional<std::string> Dataset::canonical_patient_id(std::string_view patient_id) const {
  if (demographics_.contains(std::string(patient_id))) return std::string(patient_id);
  const auto wanted = to_lower(patient_id);
  for (const auto& [id, _] : demographics_)
    if (to_lower(id) == wanted) return id;
  return std::nullopt;
}

std::vector<const DayRecord*> Dataset::days_of(std::string_view patient_id) const {
  std::vector<const DayRecord*> out;
  const std::string id(patient_id);
  for (auto it = days_.lower_bound(DayKey{id, Date{1, 1, 1}});
       it != days_.end() && it->first.patient_id == id; ++it)
    out.push_back(&it->second);
  return out;
}

Dataset load_dataset_from_streams(std::istream& demographics, std::istream& days,
                                  std::vector<std::string> feature_schema,
                                  std::string_view demographics_name, std::string_view days_name) {
  Dataset dataset(std::move(feature_schema));

  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(demographics, line)) {
    ++lineno;
    const auto text = strip_cr(line);
    if (!header_seen) {
      if (text != "patient_id,age,gender,ethnicity")
        malformed(demographics_name, lineno, "expected header 'patient_id,age,gender,ethnicity'");
      header_seen = true;
      continue;
    }
    if (text.empty()) continue;
    auto fields = split_csv_line(text);
    if (!fields) malformed(demographics_name, lineno, "unbalanced quotes");
    if (fields->size() != 4)
      malformed(demographics_name, lineno,
                "expected 4 fields, got " + std::to_string(fields->size()));
    Demographics demo;
    demo.patient_id = (*fields)[0];
    const auto& age_text = (*fields)[1];
    if (age_text.empty() || !std::all_of(age_text.begin(), age_text.end(),
                                         [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        age_text.size() > 3)
      malformed(demographics_name, lineno, "age '" + age_text + "' is not an integer");
    demo.age = std::stoi(age_text);
    demo.gender = to_lower((*fields)[2]);
    demo.ethnicity = (*fields)[3];
    try {
      dataset.add_patient(std::move(demo));
    } catch (const Error& e) {
      if (e.code() == Errc::DuplicateKey) throw;
      malformed(demographics_name, lineno, e.detail());
    }
  }
  if (!header_seen) malformed(demographics_name, 1, "missing header");

  lineno = 0;
  while (std::getline(days, line)) {
    ++lineno;
    const auto text = strip_cr(line);
    if (std::all_of(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
      continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      malformed(days_name, lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) malformed(days_name, lineno, "expected a JSON object");
    for (const auto& [k, _] : obj.items())
      if (k != "patient_id" && k != "date" && k != "metrics" && k != "journal")
        malformed(days_name, lineno, "unknown key '" + k + "'");
    if (!obj.contains("patient_id") || !obj["patient_id"].is_string())
      malformed(days_name, lineno, "patient_id must be a string");
    if (!obj.contains("date") || !obj["date"].is_string())
      malformed(days_name, lineno, "date must be a string");
    if (!obj.contains("metrics") || !obj["metrics"].is_object())
      malformed(days_name, lineno, "metrics must be an object");

    DayRecord rec;
    rec.patient_id = obj["patient_id"].get<std::string>();
    auto date = Date::parse_iso(obj["date"].get<std::string>());
    if (!date) malformed(days_name, lineno, "date must be a valid YYYY-MM-DD day");
    rec.date = *date;
    for (const auto& [name, value] : obj["metrics"].items()) {
      if (value.is_null()) rec.metrics[name] = std::nullopt;
      else if (value.is_number()) rec.metrics[name] = value.get<double>();
      else malformed(days_name, lineno, "metric '" + name + "' must be a number or null");
    }
    if (obj.contains("journal") && !obj["journal"].is_null()) {
      if (!obj["journal"].is_string()) malformed(days_name, lineno, "journal must be a string or null");
      rec.journal = obj["journal"].get<std::string>();
    }
    if (auto reason = validate_day(rec, dataset.feature_schema()))
      malformed(days_name, lineno, *reason);
    dataset.add_day(std::move(rec));
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& demographics_path,
                     const std::filesystem::path& days_path,
                     std::vector<std::string> feature_schema) {
  std::ifstream demo(demographics_path);
  if (!demo) throw Error(Errc::Io, "cannot open " + demographics_path.string());
  std::ifstream days(days_path);
  if (!days) throw Error(Errc::Io, "cannot open " + days_path.string());
  return load_dataset_from_streams(demo, days, std::move(feature_schema),
                                   demographics_path.string(), days_path.string());
}

void write_demographics_csv(const Dataset& dataset, std::ostream& out) {
  out << "patient_id,age,gender,ethnicity\n";
  for (const auto& [id, d] : dataset.demographics())
    out << csv_escape(d.patient_id) << ',' << d.age << ',' << csv_escape(d.gender) << ','
        << csv_escape(d.ethnicity) << '\n';
}

void write_days_jsonl(const Dataset& dataset, std::ostream& out) {
  for (const auto& [key, rec] : dataset.days()) {
    nlohmann::ordered_json obj;
    obj["patient_id"] = rec.patient_id;
    obj["date"] = rec.date.iso();
    auto metrics = nlohmann::ordered_json::object();
    for (const auto& name : dataset.feature_schema()) {
      auto it = rec.metrics.find(name);
      if (it == rec.metrics.end()) continue;
      if (it->second) metrics[name] = *it->second;
      else metrics[name] = nullptr;
    }
    obj["metrics"] = std::move(metrics);
    if (rec.journal) obj["journal"] = *rec.journal;
    else obj["journal"] = nullptr;
    out << obj.dump() << '\n';
  }
}

Standardizer::Standardizer(std::vector<std::string> source_schema,
                           std::vector<FeatureStats> features, std::vector<std::string> dropped)
    : source_schema_(std::move(source_schema)),
      features_(std::move(features)),
      dropped_(std::move(dropped)) {}

std::vector<std::string> Standardizer::feature_names() const {
  std::vector<std::string> names;
  names.reserve(features_.size());
  for (const auto& f : features_) names.push_back(f.name);
  return names;
}

std::optional<std::size_t> Standardizer::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  return std::nullopt;
}

double Standardizer::transform(std::size_t index, double value) const {
  const auto& f = features_.at(index);
  return (value - f.mean) / f.std;
}

Standardizer fit_standardizer(const Dataset& dataset) {
  if (dataset.days().size() < 2)
    throw Error(Errc::InsufficientData,
                "need at least 2 day records, have " + std::to_string(dataset.days().size()));

  std::vector<FeatureStats> kept;
  std::vector<std::string> dropped;
  for (const auto& name : dataset.feature_schema()) {
    std::vector<double> values;
    for (const auto& [_, rec] : dataset.days())
      if (auto v = rec.metric(name)) values.push_back(*v);
    if (values.size() < 2)
      throw Error(Errc::InsufficientData, "feature '" + name + "' has " +
                                              std::to_string(values.size()) + " observation(s)");
    // Two-pass: mean first, then centred sum of squares.
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size()));
    if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) {
      spdlog::warn("dropping constant feature '{}' from the schema", name);
      dropped.push_back(name);
      continue;
    }
    kept.push_back({name, mean, sd});
  }
  if (kept.empty()) throw Error(Errc::InsufficientData, "every feature is constant");
  return Standardizer(dataset.feature_schema(), std::move(kept), std::move(dropped));
}

std::vector<std::string> dimension_names(const Standardizer& std, const ThemeSet* themes) {
  auto names = std.feature_names();
  if (themes) {
    names.emplace_back("journal_sentiment");
    for (const auto& label : themes->labels()) names.push_back("theme_" + label);
  }
  return names;
}

std::string schema_tag_for(const std::vector<std::string>& names) {
  std::uint64_t h = fnv1a64("");
  for (const auto& n : names) {
    h = fnv1a64(n, h);
    h = fnv1a64("\x1f", h);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FeatureVector vectorize_day(const DayRecord& record, const Standardizer& std,
                            const Annotation* annotation) {
  const auto& schema = std.source_schema();
  for (const auto& [name, _] : record.metrics)
    if (std::find(schema.begin(), schema.end(), name) == schema.end())
      throw Error(Errc::SchemaMismatch, "feature '" + name + "' is not in the fitted schema");

  FeatureVector fv;
  std::vector<std::string> names;
  const auto& features = std.features();
  fv.values.reserve(features.size() + (annotation ? 1 + annotation->theme_scores.size() : 0));
  names.reserve(fv.values.capacity());
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto v = record.metric(features[i].name);
    fv.values.push_back(v ? std.transform(i, *v) : 0.0);
    names.push_back(features[i].name);
  }
  if (annotation) {
    fv.values.push_back(annotation->sentiment);
    names.emplace_back("journal_sentiment");
    for (const auto& [label, score] : annotation->theme_scores) {
      fv.values.push_back(score);
      names.push_back("theme_" + label);
    }
  }
  fv.schema_tag = schema_tag_for(names);
  return fv;
}

}  // namespace sleepgraph

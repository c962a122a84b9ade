#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sleepgraph/date.hpp"
#include "sleepgraph/ingest.hpp"

namespace sleepgraph {

struct ParsedQuery {
  std::string patient_id;
  Date date;
  std::string metric;
  std::string raw_prompt;

  DayKey day() const { return {patient_id, date}; }
  bool operator==(const ParsedQuery&) const = default;
};

struct ParseOptions {
  /// alias -> feature name ("hrv" -> "hrv_ms").
  std::map<std::string, std::string> aliases;
  /// display name -> patient id, matched as a whole word, case-insensitively.
  std::map<std::string, std::string> display_names;
  double fuzzy_threshold = 0.8;

  static ParseOptions defaults();
};

std::map<std::string, std::string> default_metric_aliases();

std::size_t levenshtein(std::string_view a, std::string_view b);
/// 1 - levenshtein(a, b) / max(|a|, |b|); 1 for two empty strings.
double edit_similarity(std::string_view a, std::string_view b);

/// Lowercase, '_'/'-' to spaces, collapsed whitespace.
std::string normalize_metric_text(std::string_view text);

/// Exact name/alias match wins; otherwise the best fuzzy match at or above the
/// threshold; otherwise a unique whole-word prefix of a feature name.
/// Throws UnknownMetric / AmbiguousMetric with the candidate list.
std::string resolve_metric(std::string_view token, const std::vector<std::string>& schema,
                           const std::map<std::string, std::string>& aliases,
                           double threshold = 0.8);

/// Extracts (patient id, date, metric) from a free-text prompt.
/// Accepted ids: `[Pp][0-9]+` or a configured display name. Accepted dates:
/// `YYYY-MM-DD` and `MonthName D, YYYY`.
ParsedQuery parse_query(std::string_view prompt, const Dataset& dataset,
                        const ParseOptions& options = ParseOptions::defaults());

}  // namespace sleepgraph

#include "sleepgraph/parse.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <optional>
#include <regex>
#include <set>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

struct Candidate {
  std::string text;  // normalized
  std::string feature;
};

std::vector<Candidate> metric_candidates(const std::vector<std::string>& schema,
                                         const std::map<std::string, std::string>& aliases) {
  static const std::set<std::string> kUnits{"min", "ms", "pct", "bpm"};
  std::vector<Candidate> out;
  for (const auto& f : schema) {
    auto norm = normalize_metric_text(f);
    out.push_back({norm, f});
    const auto last_space = norm.rfind(' ');
    if (last_space != std::string::npos && kUnits.contains(norm.substr(last_space + 1)))
      out.push_back({norm.substr(0, last_space), f});
  }
  for (const auto& [alias, feature] : aliases)
    if (std::find(schema.begin(), schema.end(), feature) != schema.end())
      out.push_back({normalize_metric_text(alias), feature});
  return out;
}

enum class Tier { None = 0, Prefix = 1, Fuzzy = 2, Exact = 3 };

struct MetricMatch {
  Tier tier = Tier::None;
  double score = 0.0;
  std::set<std::string> features;
};

MetricMatch match_metric(const std::string& token, const std::vector<Candidate>& candidates,
                         double threshold) {
  MetricMatch m;
  for (const auto& c : candidates)
    if (c.text == token) m.features.insert(c.feature);
  if (!m.features.empty()) {
    m.tier = Tier::Exact;
    m.score = 1.0;
    return m;
  }

  std::map<std::string, double> best;
  for (const auto& c : candidates) {
    const double s = edit_similarity(token, c.text);
    auto [it, inserted] = best.emplace(c.feature, s);
    if (!inserted) it->second = std::max(it->second, s);
  }
  double top = -1.0;
  for (const auto& [_, s] : best) top = std::max(top, s);
  if (top >= threshold) {
    m.tier = Tier::Fuzzy;
    m.score = top;
    for (const auto& [f, s] : best)
      if (s == top) m.features.insert(f);
    return m;
  }

  const auto prefix = token + " ";
  for (const auto& c : candidates)
    if (c.text.starts_with(prefix)) m.features.insert(c.feature);
  if (!m.features.empty()) m.tier = Tier::Prefix;
  return m;
}

std::string suggestions(const std::string& token, const std::vector<Candidate>& candidates) {
  std::map<std::string, double> best;
  for (const auto& c : candidates) {
    const double s = edit_similarity(token, c.text);
    auto [it, inserted] = best.emplace(c.feature, s);
    if (!inserted) it->second = std::max(it->second, s);
  }
  std::vector<std::pair<std::string, double>> ranked(best.begin(), best.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> names;
  for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " (%.2f)", ranked[i].second);
    names.push_back(ranked[i].first + buf);
  }
  return join(names, ", ");
}

[[noreturn]] void ambiguous(const std::set<std::string>& features, std::string_view token) {
  throw Error(Errc::AmbiguousMetric, "'" + std::string(token) + "' matches " +
                                         join(std::vector<std::string>(features.begin(), features.end()), ", ") +
                                         "; name one metric explicitly");
}

struct Span {
  std::size_t begin;
  std::size_t end;
};

const std::regex& patient_regex() {
  static const std::regex re(R"(\b[Pp][0-9]+\b)");
  return re;
}

const std::regex& iso_date_regex() {
  static const std::regex re(R"(\b([0-9]{4})-([0-9]{1,2})-([0-9]{1,2})\b)");
  return re;
}

const std::regex& month_date_regex() {
  static const std::regex re(
      R"(\b([A-Za-z]{3,9})\.?\s+([0-9]{1,2})(?:st|nd|rd|th)?,?\s+([0-9]{4})\b)");
  return re;
}

bool has_relative_date(const std::string& lowered) {
  static const std::regex re(
      R"(\b(yesterday|today|tonight|tomorrow|last\s+night|last\s+week|this\s+week|ago)\b)");
  return std::regex_search(lowered, re);
}

}  // namespace

ParseOptions ParseOptions::defaults() {
  ParseOptions o;
  o.aliases = default_metric_aliases();
  return o;
}

std::map<std::string, std::string> default_metric_aliases() {
  return {
      {"hrv", "hrv_ms"},
      {"heart rate variability", "hrv_ms"},
      {"sleep quality", "sleep_score"},
      {"total sleep", "sleep_duration_min"},
      {"sleep time", "sleep_duration_min"},
      {"wakefulness", "wakefulness_min"},
      {"awake time", "wakefulness_min"},
      {"rem sleep", "rem_min"},
      {"activity", "activity_score"},
      {"activity level", "activity_score"},
  };
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0u : 1u)});
      diag = up;
    }
  }
  return row[b.size()];
}

double edit_similarity(std::string_view a, std::string_view b) {
  const auto longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

std::string normalize_metric_text(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c == '_' || c == '-' || std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string resolve_metric(std::string_view token, const std::vector<std::string>& schema,
                           const std::map<std::string, std::string>& aliases, double threshold) {
  const auto norm = normalize_metric_text(token);
  if (norm.empty()) throw Error(Errc::UnknownMetric, "empty metric token");
  const auto candidates = metric_candidates(schema, aliases);
  const auto m = match_metric(norm, candidates, threshold);
  if (m.tier == Tier::None)
    throw Error(Errc::UnknownMetric,
                "'" + std::string(token) + "'; closest: " + suggestions(norm, candidates));
  if (m.features.size() > 1) ambiguous(m.features, token);
  return *m.features.begin();
}

ParsedQuery parse_query(std::string_view prompt_view, const Dataset& dataset,
                        const ParseOptions& options) {
  const std::string prompt(prompt_view);
  if (prompt.find_first_not_of(" \t\r\n") == std::string::npos)
    throw Error(Errc::NoPatientFound, "empty prompt");
  const auto lowered = lower(prompt);
  std::vector<Span> masked;

  // Patient: first id mention that exists in the dataset.
  struct Mention {
    std::size_t pos;
    std::size_t len;
    std::string id;
  };
  std::vector<Mention> mentions;
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), patient_regex());
       it != std::sregex_iterator(); ++it) {
    std::string id = it->str();
    id[0] = 'P';
    mentions.push_back({static_cast<std::size_t>(it->position()), static_cast<std::size_t>(it->length()), id});
  }
  for (const auto& [name, id] : options.display_names) {
    const auto needle = lower(name);
    if (needle.empty()) continue;
    for (auto pos = lowered.find(needle); pos != std::string::npos;
         pos = lowered.find(needle, pos + 1)) {
      const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(lowered[pos - 1]));
      const auto end = pos + needle.size();
      const bool right_ok = end >= lowered.size() || !std::isalnum(static_cast<unsigned char>(lowered[end]));
      if (left_ok && right_ok) mentions.push_back({pos, needle.size(), id});
    }
  }
  std::sort(mentions.begin(), mentions.end(),
            [](const Mention& a, const Mention& b) { return a.pos < b.pos; });
  if (mentions.empty())
    throw Error(Errc::NoPatientFound, "no patient id in prompt; expected an id such as 'P07'");

  std::optional<std::string> patient;
  for (const auto& m : mentions) {
    masked.push_back({m.pos, m.pos + m.len});
    if (!patient) patient = dataset.canonical_patient_id(m.id);
  }
  if (!patient) {
    std::vector<std::string> known;
    for (const auto& [id, _] : dataset.demographics()) {
      if (known.size() == 5) {
        known.emplace_back("...");
        break;
      }
      known.push_back(id);
    }
    throw Error(Errc::NoPatientFound, "patient '" + mentions.front().id +
                                          "' is not in the dataset; known ids: " + join(known, ", "));
  }

  // Date: earliest ISO or "Month D, YYYY" mention.
  struct DateMention {
    std::size_t pos;
    std::string text;
    std::optional<Date> date;
  };
  std::vector<DateMention> dates;
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), iso_date_regex());
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const int y = std::stoi(m[1]), mo = std::stoi(m[2]), d = std::stoi(m[3]);
    const auto pos = static_cast<std::size_t>(m.position(0));
    masked.push_back({pos, pos + static_cast<std::size_t>(m.length(0))});
    dates.push_back({pos, m.str(0), is_valid_date(y, mo, d) ? std::optional(Date{y, mo, d}) : std::nullopt});
  }
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), month_date_regex());
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto month = month_from_name(m[1].str());
    if (!month) continue;
    const int y = std::stoi(m[3]), d = std::stoi(m[2]);
    const auto pos = static_cast<std::size_t>(m.position(0));
    masked.push_back({pos, pos + static_cast<std::size_t>(m.length(0))});
    dates.push_back({pos, m.str(0), is_valid_date(y, *month, d) ? std::optional(Date{y, *month, d}) : std::nullopt});
  }
  std::sort(dates.begin(), dates.end(),
            [](const DateMention& a, const DateMention& b) { return a.pos < b.pos; });
  std::optional<Date> date;
  if (!dates.empty()) {
    if (!dates.front().date)
      throw Error(Errc::NoDateFound, "'" + dates.front().text + "' is not a valid calendar date");
    date = dates.front().date;
  }
  if (!date) {
    if (has_relative_date(lowered))
      throw Error(Errc::NoDateFound,
                  "relative dates are not supported; use YYYY-MM-DD or 'April 12, 2020'");
    throw Error(Errc::NoDateFound, "no date in prompt; use YYYY-MM-DD or 'April 12, 2020'");
  }

  // Metric: n-grams (n <= 4) within segments bounded by punctuation and masked spans.
  std::string text = lowered;
  for (const auto& s : masked)
    for (std::size_t i = s.begin; i < s.end && i < text.size(); ++i) text[i] = '|';
  std::vector<std::vector<std::string>> segments(1);
  std::string word;
  auto flush_word = [&] {
    if (!word.empty()) segments.back().push_back(word);
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_' || c == '-') {
      word.push_back(ch);
    } else if (c == '\'') {
      // possessive/contraction suffix stays attached but never matches a metric
      word.push_back(ch);
    } else if (std::isspace(c)) {
      flush_word();
    } else {
      flush_word();
      if (!segments.back().empty()) segments.emplace_back();
    }
  }
  flush_word();

  const auto candidates = metric_candidates(dataset.feature_schema(), options.aliases);
  Tier best_tier = Tier::None;
  double best_score = 0.0;
  std::set<std::string> best_features;
  std::string best_gram;
  for (const auto& seg : segments) {
    for (std::size_t i = 0; i < seg.size(); ++i) {
      std::string gram;
      for (std::size_t n = 1; n <= 4 && i + n <= seg.size(); ++n) {
        if (n > 1) gram += ' ';
        gram += seg[i + n - 1];
        const auto norm = normalize_metric_text(gram);
        auto m = match_metric(norm, candidates, options.fuzzy_threshold);
        if (m.tier == Tier::None) continue;
        if (m.tier > best_tier || (m.tier == Tier::Fuzzy && best_tier == Tier::Fuzzy && m.score > best_score)) {
          best_tier = m.tier;
          best_score = m.score;
          best_features = m.features;
          best_gram = gram;
        } else if (m.tier == best_tier && (m.tier != Tier::Fuzzy || m.score == best_score)) {
          best_features.insert(m.features.begin(), m.features.end());
        }
      }
    }
  }
  if (best_tier == Tier::None) {
    std::vector<std::string> schema = dataset.feature_schema();
    throw Error(Errc::UnknownMetric, "no metric named in prompt; known metrics: " + join(schema, ", "));
  }
  if (best_features.size() > 1) ambiguous(best_features, best_gram);

  ParsedQuery q{*patient, *date, *best_features.begin(), prompt};
  if (!dataset.find_day(q.day()))
    throw Error(Errc::NoSuchDayRecord, q.patient_id + ", " + q.date.iso());
  return q;
}

}  // namespace sleepgraph

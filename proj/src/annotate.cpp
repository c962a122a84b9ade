#include "sleepgraph/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "sleepgraph/error.hpp"

namespace sleepgraph {

ThemeSet::ThemeSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.empty()) throw Error(Errc::InvalidConfig, "theme set is empty");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw Error(Errc::InvalidConfig, "empty theme label");
    if (!seen.insert(l).second) throw Error(Errc::InvalidConfig, "duplicate theme label '" + l + "'");
  }
}

ThemeSet ThemeSet::defaults() {
  return ThemeSet({"academics", "personal_wellbeing", "social_interactions", "sleep_habits",
                   "stress", "physical_activity"});
}

bool ThemeSet::contains(std::string_view label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

Annotation Annotation::neutral(const ThemeSet& themes) {
  Annotation a;
  for (const auto& l : themes.labels()) a.theme_scores.emplace_back(l, 0.0);
  return a;
}

double Annotation::theme(std::string_view label) const {
  for (const auto& [l, s] : theme_scores)
    if (l == label) return s;
  return 0.0;
}

std::optional<std::string> Annotation::top_theme() const {
  const std::pair<std::string, double>* best = nullptr;
  for (const auto& p : theme_scores)
    if (p.second > 0.0 && (!best || p.second > best->second)) best = &p;
  if (!best) return std::nullopt;
  return best->first;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    std::size_t lead = 0;
    while (lead < cur.size() && cur[lead] == '\'') ++lead;
    if (lead < cur.size()) tokens.push_back(cur.substr(lead));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'') cur.push_back(static_cast<char>(std::tolower(c)));
    else flush();
  }
  flush();
  return tokens;
}

LexiconAnnotator::LexiconAnnotator(std::vector<LexiconEntry> entries) {
  for (auto& e : entries) {
    if (e.token.empty()) throw Error(Errc::InvalidConfig, "lexicon entry with empty token");
    if (e.polarity < -1 || e.polarity > 1)
      throw Error(Errc::InvalidConfig, "lexicon polarity for '" + e.token + "' must be -1, 0 or 1");
    auto token = e.token;
    for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    e.token = token;
    entries_[token] = std::move(e);
  }
}

LexiconAnnotator LexiconAnnotator::builtin() {
  std::vector<LexiconEntry> e{
      // sentiment-bearing
      {"great", 1, {}},        {"good", 1, {}},           {"refreshed", 1, {"sleep_habits"}},
      {"rested", 1, {"sleep_habits"}}, {"happy", 1, {"personal_wellbeing"}},
      {"relaxed", 1, {"personal_wellbeing"}}, {"calm", 1, {"personal_wellbeing"}},
      {"energized", 1, {"physical_activity"}}, {"productive", 1, {"academics"}},
      {"fun", 1, {"social_interactions"}}, {"enjoyed", 1, {}},    {"excited", 1, {}},
      {"motivated", 1, {"academics"}}, {"peaceful", 1, {"personal_wellbeing"}},
      {"better", 1, {}},       {"tired", -1, {"sleep_habits"}}, {"exhausted", -1, {}},
      {"stressed", -1, {"stress"}}, {"anxious", -1, {"stress"}}, {"sad", -1, {"personal_wellbeing"}},
      {"lonely", -1, {"social_interactions"}}, {"bored", -1, {}},
      {"restless", -1, {"sleep_habits"}}, {"overwhelmed", -1, {"stress"}},
      {"worried", -1, {"stress"}}, {"awful", -1, {}}, {"bad", -1, {}},
      {"frustrated", -1, {}},  {"sick", -1, {"personal_wellbeing"}},
      {"sore", -1, {"physical_activity"}}, {"insomnia", -1, {"sleep_habits"}},
      // theme keywords
      {"exam", 0, {"academics"}},   {"exams", 0, {"academics"}},   {"class", 0, {"academics"}},
      {"classes", 0, {"academics"}}, {"homework", 0, {"academics"}}, {"lecture", 0, {"academics"}},
      {"study", 0, {"academics"}},  {"studying", 0, {"academics"}}, {"assignment", 0, {"academics"}},
      {"midterm", 0, {"academics"}}, {"professor", 0, {"academics"}}, {"grades", 0, {"academics"}},
      {"deadline", 0, {"academics", "stress"}}, {"meditation", 0, {"personal_wellbeing"}},
      {"meditated", 0, {"personal_wellbeing"}}, {"mood", 0, {"personal_wellbeing"}},
      {"health", 0, {"personal_wellbeing"}}, {"friends", 0, {"social_interactions"}},
      {"friend", 0, {"social_interactions"}}, {"family", 0, {"social_interactions"}},
      {"roommate", 0, {"social_interactions"}}, {"roommates", 0, {"social_interactions"}},
      {"talked", 0, {"social_interactions"}}, {"party", 0, {"social_interactions"}},
      {"zoom", 0, {"social_interactions"}}, {"sleep", 0, {"sleep_habits"}},
      {"slept", 0, {"sleep_habits"}}, {"nap", 0, {"sleep_habits"}}, {"napped", 0, {"sleep_habits"}},
      {"bed", 0, {"sleep_habits"}}, {"bedtime", 0, {"sleep_habits"}}, {"woke", 0, {"sleep_habits"}},
      {"dreams", 0, {"sleep_habits"}}, {"stress", 0, {"stress"}}, {"pressure", 0, {"stress"}},
      {"panic", 0, {"stress"}},     {"run", 0, {"physical_activity"}}, {"ran", 0, {"physical_activity"}},
      {"walk", 0, {"physical_activity"}}, {"walked", 0, {"physical_activity"}},
      {"gym", 0, {"physical_activity"}}, {"workout", 0, {"physical_activity"}},
      {"exercise", 0, {"physical_activity"}}, {"exercised", 0, {"physical_activity"}},
      {"yoga", 0, {"physical_activity", "personal_wellbeing"}}, {"hike", 0, {"physical_activity"}},
  };
  return LexiconAnnotator(std::move(e));
}

LexiconAnnotator LexiconAnnotator::from_jsonl(std::istream& in) {
  std::vector<LexiconEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      LexiconEntry e;
      e.token = j.at("token").get<std::string>();
      e.polarity = j.value("polarity", 0);
      if (j.contains("themes")) e.themes = j.at("themes").get<std::vector<std::string>>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::InvalidConfig,
                  "lexicon line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return LexiconAnnotator(std::move(entries));
}

LexiconAnnotator LexiconAnnotator::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open lexicon " + path.string());
  return from_jsonl(in);
}

Annotation LexiconAnnotator::annotate(std::string_view text, const ThemeSet& themes) const {
  double polarity_sum = 0.0;
  int polarity_hits = 0;
  std::vector<int> theme_hits(themes.size(), 0);
  int total_theme_hits = 0;

  for (const auto& token : tokenize_words(text)) {
    auto it = entries_.find(token);
    if (it == entries_.end()) continue;
    const auto& entry = it->second;
    if (entry.polarity != 0) {
      polarity_sum += entry.polarity;
      ++polarity_hits;
    }
    for (const auto& label : entry.themes) {
      const auto& labels = themes.labels();
      auto pos = std::find(labels.begin(), labels.end(), label);
      if (pos == labels.end()) continue;
      ++theme_hits[static_cast<std::size_t>(pos - labels.begin())];
      ++total_theme_hits;
    }
  }

  Annotation a;
  a.sentiment = polarity_sum / std::max(1, polarity_hits);
  const double denom = std::max(1, total_theme_hits);
  for (std::size_t i = 0; i < themes.size(); ++i)
    a.theme_scores.emplace_back(themes.labels()[i], theme_hits[i] / denom);
  return a;
}

HttpAnnotator::HttpAnnotator(std::string endpoint_url, std::chrono::milliseconds timeout)
    : url_(std::move(endpoint_url)), timeout_(timeout) {
  detail::split_url(url_);
}

Annotation annotation_from_json(std::string_view body, const ThemeSet& themes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::InvalidBackendResponse, std::string("not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("sentiment") || !j["sentiment"].is_number())
    throw Error(Errc::InvalidBackendResponse, "missing numeric 'sentiment'");
  if (!j.contains("themes") || !j["themes"].is_object())
    throw Error(Errc::InvalidBackendResponse, "missing 'themes' object");

  auto finite = [](const nlohmann::json& v, const std::string& what) {
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw Error(Errc::InvalidBackendResponse, what + " is not finite");
    return x;
  };

  Annotation a;
  a.sentiment = std::clamp(finite(j["sentiment"], "sentiment"), -1.0, 1.0);
  for (const auto& label : themes.labels()) {
    const auto& t = j["themes"];
    if (!t.contains(label) || !t[label].is_number())
      throw Error(Errc::InvalidBackendResponse, "missing score for theme '" + label + "'");
    a.theme_scores.emplace_back(label, std::clamp(finite(t[label], label), 0.0, 1.0));
  }
  return a;
}

Annotation HttpAnnotator::annotate(std::string_view text, const ThemeSet& themes) const {
  const auto parts = detail::split_url(url_);
  httplib::Client client(parts.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  nlohmann::json req{{"text", std::string(text)}, {"themes", themes.labels()}};
  auto res = client.Post(parts.path, req.dump(), "application/json");
  if (!res) throw Error(Errc::BackendUnavailable, url_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error(Errc::BackendUnavailable, url_ + ": HTTP " + std::to_string(res->status));
  return annotation_from_json(res->body, themes);
}

Annotation annotate_text(std::string_view text, const ThemeSet& themes,
                         const AnnotatorBackend& backend) {
  const bool blank = std::all_of(text.begin(), text.end(),
                                 [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (blank) return Annotation::neutral(themes);
  auto a = backend.annotate(text, themes);
  if (a.theme_scores.size() != themes.size())
    throw Error(Errc::InvalidBackendResponse, backend.id() + ": theme count mismatch");
  for (std::size_t i = 0; i < themes.size(); ++i)
    if (a.theme_scores[i].first != themes.labels()[i])
      throw Error(Errc::InvalidBackendResponse,
                  backend.id() + ": unexpected theme '" + a.theme_scores[i].first + "'");
  if (!std::isfinite(a.sentiment))
    throw Error(Errc::InvalidBackendResponse, backend.id() + ": non-finite sentiment");
  a.sentiment = std::clamp(a.sentiment, -1.0, 1.0);
  for (auto& [_, s] : a.theme_scores) s = std::clamp(s, 0.0, 1.0);
  return a;
}

}  // namespace sleepgraph

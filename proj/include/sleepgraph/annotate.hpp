#pragma once

#include <chrono>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sleepgraph {

/// Ordered, non-empty list of unique theme labels.
class ThemeSet {
 public:
  explicit ThemeSet(std::vector<std::string> labels);

  /// academics, personal_wellbeing, social_interactions, sleep_habits,
  /// stress, physical_activity.
  static ThemeSet defaults();

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool contains(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
};

struct Annotation {
  double sentiment = 0.0;                                  // [-1, 1]
  std::vector<std::pair<std::string, double>> theme_scores;  // ThemeSet order, each [0, 1]

  static Annotation neutral(const ThemeSet& themes);

  double theme(std::string_view label) const;
  /// Highest-scoring theme (first in ThemeSet order on ties); nullopt when all are 0.
  std::optional<std::string> top_theme() const;

  bool operator==(const Annotation&) const = default;
};

class AnnotatorBackend {
 public:
  virtual ~AnnotatorBackend() = default;
  virtual Annotation annotate(std::string_view text, const ThemeSet& themes) const = 0;
  virtual std::string id() const = 0;
};

struct LexiconEntry {
  std::string token;
  int polarity = 0;  // -1, 0 (theme keyword only) or +1
  std::vector<std::string> themes;
};

/// Deterministic fallback annotator.
///
/// sentiment   = sum of matched polarities / max(1, #tokens with non-zero polarity)
/// theme score = keyword hits for the theme / max(1, keyword hits over all configured themes)
class LexiconAnnotator final : public AnnotatorBackend {
 public:
  explicit LexiconAnnotator(std::vector<LexiconEntry> entries);

  static LexiconAnnotator builtin();
  /// JSONL of {"token": str, "polarity": -1|0|1, "themes": [label, ...]}.
  static LexiconAnnotator from_jsonl(std::istream& in);
  static LexiconAnnotator from_file(const std::filesystem::path& path);

  Annotation annotate(std::string_view text, const ThemeSet& themes) const override;
  std::string id() const override { return "lexicon"; }

  const std::map<std::string, LexiconEntry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, LexiconEntry> entries_;
};

/// Remote zero-shot annotator. POSTs {"text": str, "themes": [label, ...]} and
/// expects {"sentiment": f, "themes": {label: f}}.
class HttpAnnotator final : public AnnotatorBackend {
 public:
  HttpAnnotator(std::string endpoint_url,
                std::chrono::milliseconds timeout = std::chrono::seconds(30));

  Annotation annotate(std::string_view text, const ThemeSet& themes) const override;
  std::string id() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::chrono::milliseconds timeout_;
};

/// Lowercased alphanumeric/apostrophe runs.
std::vector<std::string> tokenize_words(std::string_view text);

/// Whitespace-only text yields the neutral annotation without touching the backend.
Annotation annotate_text(std::string_view text, const ThemeSet& themes,
                         const AnnotatorBackend& backend);

/// Validates a remote payload against the theme set and clamps it into bounds.
Annotation annotation_from_json(std::string_view body, const ThemeSet& themes);

}  // namespace sleepgraph

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sleepgraph/forest.hpp"
#include "sleepgraph/graph.hpp"
#include "sleepgraph/ingest.hpp"
#include "sleepgraph/parse.hpp"

namespace sleepgraph {

/// The four incremental prompt stages; each adds one section to the previous.
enum class Stage { Demographic = 1, CurrentDay = 2, SimilarDays = 3, FeatureImportance = 4 };

inline constexpr std::array<Stage, 4> kAllStages{Stage::Demographic, Stage::CurrentDay,
                                                 Stage::SimilarDays, Stage::FeatureImportance};

/// Row label used in score tables ("Demographic Information", ...).
std::string_view stage_name(Stage s);
/// Label of the section the stage introduces ("Demographics", ...).
std::string_view stage_section_label(Stage s);
bool stage_uses_graph(Stage s);
int stage_number(Stage s);
/// Throws Usage for anything outside 1..4.
Stage stage_from_number(int n);

struct PromptSection {
  std::string label;
  std::string text;  // "## <label>\n<body>\n"

  bool operator==(const PromptSection&) const = default;
};

struct StagedPrompt {
  Stage stage = Stage::Demographic;
  ParsedQuery query;
  std::string system_text;
  std::vector<PromptSection> sections;
  std::string rendered;  // sections joined by a blank line
  std::vector<std::string> provenance;
};

/// Plain-text templates with `{name}` placeholders.
///
/// instruction:     question, patient_id, date, metric, metric_label
/// demographics:    patient_id, age, gender, ethnicity
/// current_day:     date, metrics, journal_summary
/// similar_days:    date, k, similar_days, dissimilar_days
/// feature_importance:             metric, n_rows, patient_id, neighbors, m, features
/// feature_importance_unavailable: metric, reason
struct PromptTemplates {
  std::string system;
  std::string instruction;
  std::string demographics;
  std::string current_day;
  std::string similar_days;
  std::string feature_importance;
  std::string feature_importance_unavailable;

  static PromptTemplates defaults();
  /// Reads `<name>.txt` for every template; all files must exist.
  static PromptTemplates load(const std::filesystem::path& dir);
  static const std::vector<std::string>& file_names();

  bool operator==(const PromptTemplates&) const = default;
};

inline constexpr int kTemplateVersion = 1;

struct PromptConfig {
  std::size_t k_days = 3;
  std::size_t top_features = 5;
  PromptTemplates templates = PromptTemplates::defaults();
};

/// Everything a stage may need. Stage 3+ needs the graph; stage 4 needs either
/// an importance report or a notice explaining why it is unavailable.
struct PromptContext {
  const Dataset* dataset = nullptr;
  const SimilarityGraph* graph = nullptr;
  const AnnotationMap* annotations = nullptr;
  const ImportanceReport* importance = nullptr;
  std::optional<std::string> importance_notice;
};

/// Throws MissingContext.
StagedPrompt build_prompt(Stage stage, const ParsedQuery& q, const PromptContext& ctx,
                          const PromptConfig& cfg = {});

/// Fixed-point with `places` decimals, correctly rounded from the exact binary
/// value (ties to even). Never renders "-0". Throws NonFinite.
std::string render_number(double x, int places);

/// Substitutes `{name}` placeholders. Throws InvalidConfig on an unknown or
/// unterminated placeholder.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace sleepgraph

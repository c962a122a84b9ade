#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleepgraph/llm.hpp"
#include "sleepgraph/parse.hpp"
#include "sleepgraph/prompt.hpp"

namespace sleepgraph {

enum class Criterion { Relevance, Comprehensiveness, Actionability, Personalization };

inline constexpr std::array<Criterion, 4> kAllCriteria{Criterion::Relevance, Criterion::Comprehensiveness,
                                                       Criterion::Actionability,
                                                       Criterion::Personalization};

/// "relevance", "comprehensiveness", ...
std::string_view criterion_key(Criterion c);

/// The four rubric criteria with versioned definition texts.
struct CriterionSet {
  std::string version;
  std::array<std::string, 4> definitions;  // kAllCriteria order

  static CriterionSet defaults();
  const std::string& definition(Criterion c) const { return definitions[static_cast<std::size_t>(c)]; }
  /// Throws InvalidConfig for an empty definition.
  void validate() const;
};

struct EvaluationRecord {
  std::string query_id;
  std::string prompt;  // the user's question
  Stage stage = Stage::Demographic;
  std::array<int, 4> scores{};  // kAllCriteria order, each 0..10
  std::string insight;
  std::string evaluator_raw;

  int score(Criterion c) const { return scores[static_cast<std::size_t>(c)]; }
  std::string item_id() const;

  bool operator==(const EvaluationRecord&) const = default;
};

/// Text of the first balanced `{...}` in `text`, skipping braces inside JSON
/// strings.
std::optional<std::string> first_json_object(std::string_view text);

/// Parses a strict-JSON score reply. Throws UnparseableEvaluation when the
/// object or a criterion is missing or not an integer, OutOfRangeScore when a
/// score is outside 0..10.
std::array<int, 4> parse_scores(std::string_view reply);

LlmRequest evaluator_request(std::string_view insight, const StagedPrompt& context,
                             const CriterionSet& criteria);

/// Asks the evaluator to score `insight`, re-asking up to `max_reasks` times
/// when the reply cannot be parsed.
EvaluationRecord evaluate_insight(std::string_view insight, const StagedPrompt& context,
                                  const CriterionSet& criteria, const LlmBackend& backend,
                                  int max_reasks = 2);

struct ScoreCell {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1); 0 when n == 1
  std::size_t n = 0;
};

class ScoreTable {
 public:
  void set(Stage s, Criterion c, ScoreCell cell) { cells_[{s, c}] = cell; }
  /// Throws IncompleteTable when the cell is absent.
  const ScoreCell& cell(Stage s, Criterion c) const;
  bool has(Stage s, Criterion c) const { return cells_.contains({s, c}); }
  /// Every (stage, criterion) present with n > 0.
  bool complete() const;

 private:
  std::map<std::pair<Stage, Criterion>, ScoreCell> cells_;
};

/// Mean and sample std per (stage, criterion), summed in (query id, stage) order.
ScoreTable aggregate(std::vector<EvaluationRecord> records);

/// Fixed-width text table; cells read "m.mm ± s.ss". Throws IncompleteTable.
std::string render_table(const ScoreTable& t);
/// Long-format CSV: stage,stage_name,uses_graph,criterion,mean,std,n.
std::string render_csv(const ScoreTable& t);

nlohmann::ordered_json record_to_json(const EvaluationRecord& r);
EvaluationRecord record_from_json(const nlohmann::json& j);
void write_record_log(const std::vector<EvaluationRecord>& records, std::ostream& out);
std::vector<EvaluationRecord> read_record_log(std::istream& in);

struct ExperimentConfig {
  std::uint64_t shuffle_seed = 0;
  double failure_budget = 0.10;  // abort when more than this fraction of items fail
  std::size_t parallelism = 1;
  CriterionSet criteria = CriterionSet::defaults();
  int max_reasks = 2;
};

struct ItemFailure {
  std::string item_id;
  std::string phase;  // "prompt", "generate" or "evaluate"
  std::string error;
};

struct ExperimentResult {
  ScoreTable table;
  /// Sorted by (query id, stage); only queries whose four items all succeeded.
  std::vector<EvaluationRecord> records;
  /// Item ids in the order they were sent to the evaluator.
  std::vector<std::string> evaluation_order;
  std::vector<ItemFailure> failures;
  std::vector<std::string> dropped_queries;
};

using PromptProvider = std::function<StagedPrompt(const ParsedQuery&, Stage)>;

/// "q001", "q002", ... for the i-th (0-based) query.
std::string query_id(std::size_t index);

/// Generates all four stage insights per query, evaluates them in a seeded
/// shuffled order and aggregates. Throws FailureBudgetExceeded.
ExperimentResult run_experiment(const std::vector<ParsedQuery>& queries, const PromptProvider& prompts,
                                const LlmBackend& generator, const LlmBackend& evaluator,
                                const ExperimentConfig& cfg);

}  // namespace sleepgraph

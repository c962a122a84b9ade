#include "sleepgraph/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

std::string_view criterion_key(Criterion c) {
  switch (c) {
    case Criterion::Relevance: return "relevance";
    case Criterion::Comprehensiveness: return "comprehensiveness";
    case Criterion::Actionability: return "actionability";
    case Criterion::Personalization: return "personalization";
  }
  return "?";
}

namespace {

std::string_view criterion_title(Criterion c) {
  switch (c) {
    case Criterion::Relevance: return "Relevance";
    case Criterion::Comprehensiveness: return "Comprehensiveness";
    case Criterion::Actionability: return "Actionability";
    case Criterion::Personalization: return "Personalization";
  }
  return "?";
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

}  // namespace

CriterionSet CriterionSet::defaults() {
  CriterionSet s;
  s.version = "rubric-v1";
  s.definitions = {
      "How directly the insight addresses the user's question and the queried metric on the "
      "queried day, without drifting to unrelated topics.",
      "How fully the insight uses the available information (demographics, the day's metrics, "
      "journal context, comparable days and influential factors) to explain the metric.",
      "How concrete, specific and feasible the recommendations are, so the person could act on "
      "them in the following days.",
      "How much the insight is tailored to this particular person, referring to their own data, "
      "history and circumstances rather than generic advice."};
  return s;
}

void CriterionSet::validate() const {
  if (version.empty()) throw Error(Errc::InvalidConfig, "criterion set without a version");
  for (auto c : kAllCriteria)
    if (definition(c).empty())
      throw Error(Errc::InvalidConfig, "empty definition for " + std::string(criterion_key(c)));
}

std::string EvaluationRecord::item_id() const {
  return query_id + "/s" + std::to_string(stage_number(stage));
}

std::optional<std::string> first_json_object(std::string_view text) {
  const auto start = text.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return std::string(text.substr(start, i - start + 1));
  }
  return std::nullopt;
}

std::array<int, 4> parse_scores(std::string_view reply) {
  const auto object = first_json_object(reply);
  if (!object) throw Error(Errc::UnparseableEvaluation, "no JSON object in evaluator reply");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*object);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(Errc::UnparseableEvaluation, "evaluator reply is not valid JSON");
  }
  std::array<int, 4> scores{};
  for (auto c : kAllCriteria) {
    const std::string key(criterion_key(c));
    if (!j.contains(key)) throw Error(Errc::UnparseableEvaluation, "missing criterion " + key);
    const auto& v = j[key];
    double value = 0.0;
    if (v.is_number_integer()) {
      value = static_cast<double>(v.get<std::int64_t>());
    } else if (v.is_number_float() && std::isfinite(v.get<double>()) &&
               v.get<double>() == std::floor(v.get<double>())) {
      value = v.get<double>();
    } else {
      throw Error(Errc::UnparseableEvaluation, key + " is not an integer");
    }
    if (value < 0 || value > 10)
      throw Error(Errc::OutOfRangeScore, key + " = " + v.dump() + " outside 0..10");
    scores[static_cast<std::size_t>(c)] = static_cast<int>(value);
  }
  return scores;
}

LlmRequest evaluator_request(std::string_view insight, const StagedPrompt& context,
                             const CriterionSet& criteria) {
  LlmRequest req;
  req.system_text =
      "You are a strict evaluator of personalized sleep-health insights. You score text against "
      "a rubric and reply with JSON only.";
  std::string u = "Rate the insight below on each criterion with an integer from 0 to 10.\n\n";
  u += "Criteria (" + criteria.version + "):\n";
  for (auto c : kAllCriteria)
    u += "- " + std::string(criterion_key(c)) + ": " + criteria.definition(c) + "\n";
  u += "\nUser question: " + context.query.raw_prompt + "\n\nInsight:\n<<<\n" + std::string(insight) +
       "\n>>>\n\nReply with only this JSON object: {\"relevance\": int, \"comprehensiveness\": int, "
       "\"actionability\": int, \"personalization\": int}";
  req.user_text = std::move(u);
  return req;
}

EvaluationRecord evaluate_insight(std::string_view insight, const StagedPrompt& context,
                                  const CriterionSet& criteria, const LlmBackend& backend,
                                  int max_reasks) {
  if (insight.empty()) throw Error(Errc::InvalidConfig, "cannot evaluate an empty insight");
  criteria.validate();
  auto req = evaluator_request(insight, context, criteria);
  EvaluationRecord rec;
  rec.prompt = context.query.raw_prompt;
  rec.stage = context.stage;
  rec.insight = std::string(insight);
  std::string raw;
  for (int attempt = 0;; ++attempt) {
    raw = backend.complete(req).text;
    try {
      rec.scores = parse_scores(raw);
      rec.evaluator_raw = raw;
      return rec;
    } catch (const Error& e) {
      if (e.code() != Errc::UnparseableEvaluation) throw;
      if (attempt >= max_reasks) throw Error(Errc::UnparseableEvaluation, raw);
      spdlog::debug("evaluator reply unparseable ({}), re-asking", e.detail());
    }
    if (attempt == 0)
      req.user_text += "\n\nYour previous reply could not be parsed. Reply with the JSON object only.";
  }
}

const ScoreCell& ScoreTable::cell(Stage s, Criterion c) const {
  auto it = cells_.find({s, c});
  if (it == cells_.end())
    throw Error(Errc::IncompleteTable, "no cell for stage " + std::to_string(stage_number(s)) + " " +
                                           std::string(criterion_key(c)));
  return it->second;
}

bool ScoreTable::complete() const {
  for (auto s : kAllStages)
    for (auto c : kAllCriteria) {
      auto it = cells_.find({s, c});
      if (it == cells_.end() || it->second.n == 0) return false;
    }
  return true;
}

ScoreTable aggregate(std::vector<EvaluationRecord> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.query_id, a.stage) < std::tie(b.query_id, b.stage);
  });
  ScoreTable t;
  for (auto s : kAllStages) {
    for (auto c : kAllCriteria) {
      std::vector<double> xs;
      for (const auto& r : records)
        if (r.stage == s) xs.push_back(r.score(c));
      if (xs.empty()) continue;
      ScoreCell cell;
      cell.n = xs.size();
      double sum = 0.0;
      for (double x : xs) sum += x;
      cell.mean = sum / static_cast<double>(cell.n);
      if (cell.n > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - cell.mean) * (x - cell.mean);
        cell.std = std::sqrt(ss / static_cast<double>(cell.n - 1));
      }
      t.set(s, c, cell);
    }
  }
  return t;
}

std::string render_table(const ScoreTable& t) {
  if (!t.complete()) throw Error(Errc::IncompleteTable, "score table has missing cells");
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Stage", "Uses Graph"};
  for (auto c : kAllCriteria) header.emplace_back(criterion_title(c));
  rows.push_back(header);
  for (auto s : kAllStages) {
    std::vector<std::string> row{std::string(stage_name(s)), stage_uses_graph(s) ? "Yes" : "No"};
    for (auto c : kAllCriteria) {
      const auto& cell = t.cell(s, c);
      row.push_back(render_number(cell.mean, 2) + " ± " + render_number(cell.std, 2));
    }
    rows.push_back(row);
  }
  // Column widths count code points so the "±" cells line up.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) {
      return (static_cast<unsigned char>(ch) & 0xC0) != 0x80;
    }));
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], width(row[i]));
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    out += "|";
    for (std::size_t i = 0; i < row.size(); ++i)
      out += " " + row[i] + std::string(widths[i] - width(row[i]), ' ') + " |";
    out += "\n";
  };
  emit(rows[0]);
  out += "|";
  for (auto w : widths) out += std::string(w + 2, '-') + "|";
  out += "\n";
  for (std::size_t r = 1; r < rows.size(); ++r) emit(rows[r]);
  const auto n = t.cell(Stage::Demographic, Criterion::Relevance).n;
  out += "n = " + std::to_string(n) + " per cell\n";
  return out;
}

std::string render_csv(const ScoreTable& t) {
  if (!t.complete()) throw Error(Errc::IncompleteTable, "score table has missing cells");
  std::string out = "stage,stage_name,uses_graph,criterion,mean,std,n\n";
  char buf[64];
  for (auto s : kAllStages)
    for (auto c : kAllCriteria) {
      const auto& cell = t.cell(s, c);
      out += std::to_string(stage_number(s)) + ",\"" + std::string(stage_name(s)) + "\"," +
             (stage_uses_graph(s) ? "yes" : "no") + "," + std::string(criterion_key(c)) + ",";
      std::snprintf(buf, sizeof buf, "%.17g", cell.mean);
      out += buf;
      out += ",";
      std::snprintf(buf, sizeof buf, "%.17g", cell.std);
      out += buf;
      out += "," + std::to_string(cell.n) + "\n";
    }
  return out;
}

nlohmann::ordered_json record_to_json(const EvaluationRecord& r) {
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  j["stage"] = stage_number(r.stage);
  j["prompt"] = r.prompt;
  nlohmann::ordered_json scores;
  for (auto c : kAllCriteria) scores[std::string(criterion_key(c))] = r.score(c);
  j["scores"] = scores;
  j["insight"] = r.insight;
  j["evaluator_raw"] = r.evaluator_raw;
  return j;
}

EvaluationRecord record_from_json(const nlohmann::json& j) {
  try {
    EvaluationRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    r.stage = stage_from_number(j.at("stage").get<int>());
    r.prompt = j.value("prompt", "");
    for (auto c : kAllCriteria) {
      const int v = j.at("scores").at(std::string(criterion_key(c))).get<int>();
      if (v < 0 || v > 10) throw Error(Errc::OutOfRangeScore, "score out of range in log");
      r.scores[static_cast<std::size_t>(c)] = v;
    }
    r.insight = j.value("insight", "");
    r.evaluator_raw = j.value("evaluator_raw", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedRow, std::string("record log: ") + e.what());
  }
}

void write_record_log(const std::vector<EvaluationRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<EvaluationRecord> read_record_log(std::istream& in) {
  std::vector<EvaluationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(Errc::MalformedRow, "record log:" + std::to_string(lineno) + ": invalid JSON");
    }
    out.push_back(record_from_json(j));
  }
  return out;
}

std::string query_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%03zu", index + 1);
  return buf;
}

ExperimentResult run_experiment(const std::vector<ParsedQuery>& queries, const PromptProvider& prompts,
                                const LlmBackend& generator, const LlmBackend& evaluator,
                                const ExperimentConfig& cfg) {
  if (queries.empty()) throw Error(Errc::Usage, "no queries to evaluate");
  cfg.criteria.validate();

  struct Item {
    std::string qid;
    std::size_t query = 0;
    Stage stage = Stage::Demographic;
    std::optional<StagedPrompt> prompt;
    std::string insight;
    std::optional<EvaluationRecord> record;
    std::optional<ItemFailure> failure;
  };
  std::vector<Item> items;
  items.reserve(queries.size() * kAllStages.size());
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (auto s : kAllStages) items.push_back({query_id(q), q, s, {}, {}, {}, {}});

  auto item_id = [](const Item& it) { return it.qid + "/s" + std::to_string(stage_number(it.stage)); };

  parallel_for(items.size(), cfg.parallelism, [&](std::size_t i) {
    auto& it = items[i];
    std::string phase = "prompt";
    try {
      it.prompt = prompts(queries[it.query], it.stage);
      phase = "generate";
      LlmRequest req;
      req.system_text = it.prompt->system_text;
      req.user_text = it.prompt->rendered;
      it.insight = generator.complete(req).text;
      if (it.insight.empty()) throw Error(Errc::MalformedResponse, "empty insight");
    } catch (const Error& e) {
      it.failure = ItemFailure{item_id(it), phase, e.what()};
    }
  });

  // Seeded permutation of the evaluation order; results are stored per item.
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  ExperimentResult result;
  for (auto i : order) result.evaluation_order.push_back(item_id(items[i]));

  parallel_for(order.size(), cfg.parallelism, [&](std::size_t k) {
    auto& it = items[order[k]];
    if (it.failure) return;
    try {
      auto rec = evaluate_insight(it.insight, *it.prompt, cfg.criteria, evaluator, cfg.max_reasks);
      rec.query_id = it.qid;
      it.record = std::move(rec);
    } catch (const Error& e) {
      it.failure = ItemFailure{item_id(it), "evaluate", e.what()};
    }
  });

  std::set<std::string> failed_queries;
  for (const auto& it : items)
    if (it.failure) {
      result.failures.push_back(*it.failure);
      failed_queries.insert(it.qid);
      spdlog::warn("item {} failed during {}: {}", it.failure->item_id, it.failure->phase, it.failure->error);
    }
  const double budget = cfg.failure_budget * static_cast<double>(items.size());
  if (static_cast<double>(result.failures.size()) > budget)
    throw Error(Errc::FailureBudgetExceeded, std::to_string(result.failures.size()) + " of " +
                                                 std::to_string(items.size()) + " items failed");

  for (const auto& it : items) {
    if (failed_queries.contains(it.qid)) continue;
    result.records.push_back(*it.record);
  }
  result.dropped_queries.assign(failed_queries.begin(), failed_queries.end());
  result.table = aggregate(result.records);
  return result;
}

}  // namespace sleepgraph

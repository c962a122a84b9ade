#include "sleepgraph/prompt.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sleepgraph/error.hpp"

namespace sleepgraph {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Demographic: return "Demographic Information";
    case Stage::CurrentDay: return "Current Day Information";
    case Stage::SimilarDays: return "Similar/Dissimilar Days Info";
    case Stage::FeatureImportance: return "Feature Importance";
  }
  return "?";
}

std::string_view stage_section_label(Stage s) {
  switch (s) {
    case Stage::Demographic: return "Demographics";
    case Stage::CurrentDay: return "Current Day";
    case Stage::SimilarDays: return "Similar/Dissimilar Days";
    case Stage::FeatureImportance: return "Feature Importance";
  }
  return "?";
}

bool stage_uses_graph(Stage s) { return s == Stage::SimilarDays || s == Stage::FeatureImportance; }

int stage_number(Stage s) { return static_cast<int>(s); }

Stage stage_from_number(int n) {
  if (n < 1 || n > 4) throw Error(Errc::Usage, "stage must be 1..4, got " + std::to_string(n));
  return static_cast<Stage>(n);
}

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.system =
      "You are a careful sleep-health assistant. You explain wearable data to non-experts, "
      "ground every statement in the data you are given, and never give a medical diagnosis.";
  t.instruction =
      "Answer the question about patient {patient_id} on {date}. Focus on {metric_label} "
      "({metric}) and give personalized, actionable insights that use only the information in "
      "the sections below.\n"
      "Question: {question}";
  t.demographics = "Patient {patient_id}: age {age}, gender {gender}, ethnicity {ethnicity}.";
  t.current_day =
      "Wearable metrics on {date}:\n"
      "{metrics}\n"
      "Journal: {journal_summary}";
  t.similar_days =
      "Days most similar to {date} (cosine similarity of the daily profile):\n"
      "{similar_days}\n"
      "Days most dissimilar to {date}:\n"
      "{dissimilar_days}";
  t.feature_importance =
      "Most influential factors for {metric} (random forest trained on {n_rows} days from "
      "patient {patient_id} and similar patients: {neighbors}):\n"
      "{features}";
  t.feature_importance_unavailable = "Feature importance for {metric} is unavailable: {reason}.";
  return t;
}

const std::vector<std::string>& PromptTemplates::file_names() {
  static const std::vector<std::string> kNames{
      "system", "instruction", "demographics", "current_day", "similar_days",
      "feature_importance", "feature_importance_unavailable"};
  return kNames;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  auto read = [&](const std::string& name) {
    const auto path = dir / (name + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto text = ss.str();
    if (text.ends_with('\n')) text.pop_back();
    return text;
  };
  PromptTemplates t;
  t.system = read("system");
  t.instruction = read("instruction");
  t.demographics = read("demographics");
  t.current_day = read("current_day");
  t.similar_days = read("similar_days");
  t.feature_importance = read("feature_importance");
  t.feature_importance_unavailable = read("feature_importance_unavailable");
  return t;
}

std::string render_number(double x, int places) {
  if (!std::isfinite(x)) throw Error(Errc::NonFinite, "cannot render a non-finite number");
  if (places < 0 || places > 17) throw Error(Errc::InvalidConfig, "places must be in [0, 17]");
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.*f", places, x);
  std::string out(buf);
  if (out.starts_with('-') && out.find_first_not_of("-0.") == std::string::npos) out.erase(0, 1);
  return out;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size() * 2);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') {
      out.push_back(tmpl[i]);
      continue;
    }
    const auto close = tmpl.find('}', i);
    if (close == std::string_view::npos)
      throw Error(Errc::InvalidConfig, "unterminated placeholder in template");
    const std::string name(tmpl.substr(i + 1, close - i - 1));
    auto it = vars.find(name);
    if (it == vars.end()) throw Error(Errc::InvalidConfig, "unknown template placeholder {" + name + "}");
    out += it->second;
    i = close;
  }
  return out;
}

namespace {

std::string metric_label(const std::string& metric) {
  std::string out = metric;
  for (auto& c : out)
    if (c == '_') c = ' ';
  return out;
}

std::string metric_values(const DayRecord& rec, const std::vector<std::string>& schema,
                          std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i) out += sep;
    auto v = rec.metric(schema[i]);
    out += schema[i] + (sep == "\n" ? ": " : " ") + (v ? render_number(*v, 1) : std::string("missing"));
  }
  return out;
}

std::string journal_summary(const DayRecord& rec, const AnnotationMap* annotations) {
  if (!rec.journal) return "no journal entry";
  if (!annotations) return "entry present (not annotated)";
  auto it = annotations->find(rec.key());
  if (it == annotations->end()) return "entry present (not annotated)";
  const auto& a = it->second;
  const char* tone = a.sentiment > 0.25 ? "positive" : a.sentiment < -0.25 ? "negative" : "neutral";
  std::string out = "sentiment " + render_number(a.sentiment, 2) + " (" + tone + ")";
  auto top = a.top_theme();
  out += ", main theme: " + (top ? *top : std::string("none"));
  return out;
}

PromptSection make_section(Stage stage, std::string body) {
  const std::string label(stage_section_label(stage));
  return {label, "## " + label + "\n" + body + "\n"};
}

[[noreturn]] void missing(Stage stage, const std::string& what) {
  throw Error(Errc::MissingContext, "stage " + std::to_string(stage_number(stage)) + " needs " + what);
}

}  // namespace

StagedPrompt build_prompt(Stage stage, const ParsedQuery& q, const PromptContext& ctx,
                          const PromptConfig& cfg) {
  if (!ctx.dataset) missing(stage, "the dataset");
  const auto& ds = *ctx.dataset;
  const auto& t = cfg.templates;
  const int level = stage_number(stage);

  StagedPrompt p;
  p.stage = stage;
  p.query = q;
  p.system_text = t.system;

  p.sections.push_back({"Instruction", "## Instruction\n" +
                                           render_template(t.instruction, {{"question", q.raw_prompt},
                                                                           {"patient_id", q.patient_id},
                                                                           {"date", q.date.iso()},
                                                                           {"metric", q.metric},
                                                                           {"metric_label", metric_label(q.metric)}}) +
                                           "\n"});

  const auto* demo = ds.find_patient(q.patient_id);
  if (!demo) missing(stage, "demographics for " + q.patient_id);
  p.sections.push_back(make_section(
      Stage::Demographic,
      render_template(t.demographics, {{"patient_id", demo->patient_id},
                                       {"age", std::to_string(demo->age)},
                                       {"gender", demo->gender},
                                       {"ethnicity", demo->ethnicity}})));
  p.provenance.push_back("dataset:demographics/" + demo->patient_id);

  if (level >= 2) {
    const auto* rec = ds.find_day(q.day());
    if (!rec) missing(stage, "the day record " + q.day().node_id());
    p.sections.push_back(make_section(
        Stage::CurrentDay,
        render_template(t.current_day, {{"date", q.date.iso()},
                                        {"metrics", "- " + [&] {
                                           std::string m = metric_values(*rec, ds.feature_schema(), "\n");
                                           std::string out;
                                           for (char c : m) {
                                             out.push_back(c);
                                             if (c == '\n') out += "- ";
                                           }
                                           return out;
                                         }()},
                                        {"journal_summary", journal_summary(*rec, ctx.annotations)}})));
    p.provenance.push_back("dataset:day/" + q.day().node_id());
    if (rec->journal && ctx.annotations && ctx.annotations->contains(rec->key()))
      p.provenance.push_back("annotation:" + q.day().node_id());
  }

  if (level >= 3) {
    if (!ctx.graph) missing(stage, "the similarity graph");
    const auto sim = similar_days(*ctx.graph, q.patient_id, q.date, cfg.k_days);
    const auto dis = dissimilar_days(*ctx.graph, q.patient_id, q.date, cfg.k_days);
    auto list = [&](const NeighborResult& r) {
      if (r.items.empty()) return std::string("- none");
      std::string out;
      for (std::size_t i = 0; i < r.items.size(); ++i) {
        const auto& n = r.items[i];
        const auto* rec = ds.find_day({q.patient_id, *n.date});
        if (i) out += "\n";
        out += "- " + n.date->iso() + " (similarity " + render_number(n.similarity, 3) + "): " +
               (rec ? metric_values(*rec, ds.feature_schema(), ", ") : std::string("no record"));
        p.provenance.push_back("dataset:day/" + n.id);
      }
      return out;
    };
    p.provenance.push_back("graph:similar_days(" + sim.query + ",k=" + std::to_string(cfg.k_days) + ")");
    const auto sim_text = list(sim);
    p.provenance.push_back("graph:dissimilar_days(" + dis.query + ",k=" + std::to_string(cfg.k_days) + ")");
    const auto dis_text = list(dis);
    p.sections.push_back(make_section(
        Stage::SimilarDays,
        render_template(t.similar_days, {{"date", q.date.iso()},
                                         {"k", std::to_string(cfg.k_days)},
                                         {"similar_days", sim_text},
                                         {"dissimilar_days", dis_text}})));
  }

  if (level >= 4) {
    if (ctx.importance) {
      const auto& rep = *ctx.importance;
      const auto ranked = rep.ranked();
      std::string features;
      const auto m = std::min(cfg.top_features, ranked.size());
      for (std::size_t i = 0; i < m; ++i) {
        if (i) features += "\n";
        features += std::to_string(i + 1) + ". " + ranked[i].first + ": " + render_number(ranked[i].second, 3);
      }
      std::string neighbors;
      for (std::size_t i = 0; i < rep.neighbor_patients.size(); ++i)
        neighbors += (i ? ", " : "") + rep.neighbor_patients[i];
      if (neighbors.empty()) neighbors = "none";
      p.sections.push_back(make_section(
          Stage::FeatureImportance,
          render_template(t.feature_importance, {{"metric", rep.target},
                                                 {"n_rows", std::to_string(rep.n_rows)},
                                                 {"patient_id", q.patient_id},
                                                 {"neighbors", neighbors},
                                                 {"m", std::to_string(m)},
                                                 {"features", features}})));
      p.provenance.push_back("forest:" + rep.id());
    } else if (ctx.importance_notice) {
      p.sections.push_back(make_section(
          Stage::FeatureImportance,
          render_template(t.feature_importance_unavailable,
                          {{"metric", q.metric}, {"reason", *ctx.importance_notice}})));
      p.provenance.push_back("forest:unavailable");
    } else {
      missing(stage, "an importance report");
    }
  }

  for (std::size_t i = 0; i < p.sections.size(); ++i) {
    if (i) p.rendered += "\n";
    p.rendered += p.sections[i].text;
  }
  return p;
}

}  // namespace sleepgraph

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sleepgraph/error.hpp"
#include "sleepgraph/pipeline.hpp"
#include "sleepgraph/prompt.hpp"
#include "support.hpp"

using namespace sleepgraph;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Usage;
}

struct Fixture {
  Dataset ds = sgtest::small_dataset();
  Standardizer stdz = fit_standardizer(ds);
  AnnotationMap ann = sgtest::annotate_dataset(ds);
  SimilarityGraph g = build_graph(ds, stdz, ann);
  ImportanceReport rep{{{"hrv_ms", 0.25}, {"wakefulness_min", 0.5}, {"rem_min", 0.25}},
                       "sleep_score", 7, {"P07"}};
  ParsedQuery q{"P03", Date{2020, 4, 12}, "sleep_score", "How was P03's sleep score on 2020-04-12?"};

  PromptContext ctx() const { return {&ds, &g, &ann, &rep, std::nullopt}; }
};

void expect_monotone(const std::vector<StagedPrompt>& stages) {
  for (std::size_t k = 1; k < stages.size(); ++k) {
    const auto& prev = stages[k - 1];
    const auto& cur = stages[k];
    ASSERT_EQ(cur.sections.size(), prev.sections.size() + 1);
    for (std::size_t i = 0; i < prev.sections.size(); ++i) EXPECT_EQ(cur.sections[i], prev.sections[i]);
    EXPECT_NE(cur.rendered.find(prev.rendered), std::string::npos);
  }
}

}  // namespace

TEST(RenderNumber, RoundsFromExactBinaryValue) {
  EXPECT_EQ(render_number(0.5, 0), "0");
  EXPECT_EQ(render_number(2.5, 0), "2");
  EXPECT_EQ(render_number(6.275, 2), "6.28");
  EXPECT_EQ(render_number(1.005, 2), "1.00");
  EXPECT_EQ(render_number(3.61, 2), "3.61");
  EXPECT_EQ(render_number(-0.0, 2), "0.00");
  EXPECT_EQ(render_number(-0.0001, 2), "0.00");
  EXPECT_EQ(render_number(-1.25, 1), "-1.2");
  EXPECT_EQ(code_of([] { render_number(std::nan(""), 2); }), Errc::NonFinite);
  EXPECT_EQ(code_of([] { render_number(std::numeric_limits<double>::infinity(), 2); }), Errc::NonFinite);
}

TEST(RenderTemplate, Placeholders) {
  EXPECT_EQ(render_template("a {x} b {y}{x}", {{"x", "1"}, {"y", "2"}}), "a 1 b 21");
  EXPECT_EQ(render_template("no vars", {}), "no vars");
  EXPECT_EQ(code_of([] { render_template("{nope}", {}); }), Errc::InvalidConfig);
  EXPECT_EQ(code_of([] { render_template("open {x", {{"x", "1"}}); }), Errc::InvalidConfig);
}

TEST(Stages, NamesAndGraphFlags) {
  EXPECT_EQ(stage_name(Stage::Demographic), "Demographic Information");
  EXPECT_EQ(stage_name(Stage::SimilarDays), "Similar/Dissimilar Days Info");
  EXPECT_FALSE(stage_uses_graph(Stage::Demographic));
  EXPECT_FALSE(stage_uses_graph(Stage::CurrentDay));
  EXPECT_TRUE(stage_uses_graph(Stage::SimilarDays));
  EXPECT_TRUE(stage_uses_graph(Stage::FeatureImportance));
  EXPECT_EQ(stage_from_number(3), Stage::SimilarDays);
  EXPECT_EQ(code_of([] { stage_from_number(5); }), Errc::Usage);
}

TEST(BuildPrompt, StagesAddOneSectionEach) {
  const Fixture f;
  std::vector<StagedPrompt> stages;
  for (auto s : kAllStages) stages.push_back(build_prompt(s, f.q, f.ctx()));
  expect_monotone(stages);
  EXPECT_EQ(stages[0].sections.size(), 2u);
  EXPECT_EQ(stages[0].sections[1].label, "Demographics");
  EXPECT_EQ(stages[3].sections.back().label, "Feature Importance");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(stages[i].rendered, build_prompt(kAllStages[i], f.q, f.ctx()).rendered);
}

TEST(BuildPrompt, Stage1UsesDemographicsOnly) {
  const Fixture f;
  const auto p = build_prompt(Stage::Demographic, f.q, f.ctx());
  EXPECT_NE(p.rendered.find("Patient P03: age 21, gender female, ethnicity Asian."), std::string::npos);
  EXPECT_EQ(p.rendered.find("sleep_duration_min"), std::string::npos);
  EXPECT_EQ(p.provenance, std::vector<std::string>{"dataset:demographics/P03"});
}

TEST(BuildPrompt, Stage2ShowsMetricsAndJournalSummary) {
  const Fixture f;
  const auto p = build_prompt(Stage::CurrentDay, f.q, f.ctx());
  EXPECT_NE(p.rendered.find("- sleep_score: 62.0\n- sleep_duration_min: 380.0"), std::string::npos);
  // "Stressed about an exam.": stressed(-1, stress), exam(0, academics)
  EXPECT_NE(p.rendered.find("Journal: sentiment -1.00 (negative), main theme: academics"), std::string::npos)
      << p.rendered;
  EXPECT_EQ(p.rendered.find("Stressed about"), std::string::npos);
}

TEST(BuildPrompt, Stage3ListsOracleDays) {
  const Fixture f;
  const auto p = build_prompt(Stage::SimilarDays, f.q, f.ctx());
  const auto ov = sgtest::oracle_vectors(f.ds, f.stdz, f.ann);
  const auto sim = sgtest::oracle_days(ov, f.q.day(), 3, true);
  const auto dis = sgtest::oracle_days(ov, f.q.day(), 3, false);
  const auto& body = p.sections.back().text;
  const auto split = body.find("Days most dissimilar");
  ASSERT_NE(split, std::string::npos);
  std::size_t pos = 0;
  for (const auto& [id, s] : sim) {
    const auto line = "- " + id.substr(4) + " (similarity " + render_number(s, 3) + ")";
    const auto at = body.find(line, pos);
    ASSERT_NE(at, std::string::npos) << line;
    EXPECT_LT(at, split);
    pos = at;
  }
  pos = split;
  for (const auto& [id, s] : dis) {
    const auto at = body.find("- " + id.substr(4) + " (similarity " + render_number(s, 3) + ")", pos);
    ASSERT_NE(at, std::string::npos);
    pos = at;
  }
}

TEST(BuildPrompt, Stage4RanksImportance) {
  const Fixture f;
  PromptConfig cfg;
  cfg.top_features = 2;
  const auto p = build_prompt(Stage::FeatureImportance, f.q, f.ctx(), cfg);
  EXPECT_NE(p.sections.back().text.find("1. wakefulness_min: 0.500\n2. hrv_ms: 0.250\n"), std::string::npos);
  EXPECT_EQ(p.sections.back().text.find("rem_min"), std::string::npos);
  EXPECT_EQ(p.provenance.back(), "forest:" + f.rep.id());
}

TEST(BuildPrompt, Stage4FallbackNotice) {
  const Fixture f;
  auto ctx = f.ctx();
  ctx.importance = nullptr;
  ctx.importance_notice = "only 7 training days";
  const auto p = build_prompt(Stage::FeatureImportance, f.q, ctx);
  EXPECT_EQ(p.sections.back().label, "Feature Importance");
  EXPECT_NE(p.sections.back().text.find("unavailable: only 7 training days."), std::string::npos);
  EXPECT_EQ(p.provenance.back(), "forest:unavailable");
}

TEST(BuildPrompt, MissingContext) {
  const Fixture f;
  auto ctx = f.ctx();
  ctx.importance = nullptr;
  EXPECT_EQ(code_of([&] { build_prompt(Stage::FeatureImportance, f.q, ctx); }), Errc::MissingContext);
  ctx.graph = nullptr;
  EXPECT_EQ(code_of([&] { build_prompt(Stage::SimilarDays, f.q, ctx); }), Errc::MissingContext);
  EXPECT_NO_THROW(build_prompt(Stage::CurrentDay, f.q, ctx));
  ctx.dataset = nullptr;
  EXPECT_EQ(code_of([&] { build_prompt(Stage::Demographic, f.q, ctx); }), Errc::MissingContext);
}

TEST(BuildPrompt, CustomTemplates) {
  const Fixture f;
  PromptConfig cfg;
  cfg.templates.demographics = "{patient_id} is {age}";
  const auto p = build_prompt(Stage::Demographic, f.q, f.ctx(), cfg);
  EXPECT_EQ(p.sections[1].text, "## Demographics\nP03 is 21\n");
  cfg.templates.demographics = "{height}";
  EXPECT_EQ(code_of([&] { build_prompt(Stage::Demographic, f.q, f.ctx(), cfg); }), Errc::InvalidConfig);
}

TEST(Templates, CheckedInFilesMatchDefaults) {
  EXPECT_EQ(PromptTemplates::load(std::string(SG_SOURCE_DIR) + "/templates"), PromptTemplates::defaults());
  EXPECT_EQ(code_of([] { PromptTemplates::load("/nonexistent-dir"); }), Errc::Io);
}

TEST(Pipeline, MonotoneOverSyntheticQueries) {
  SynthSpec spec;
  spec.n_patients = 5;
  spec.days_per_patient = 20;
  auto cfg = PipelineConfig::defaults();
  cfg.forest.n_trees = 10;
  const Pipeline pipe(generate(spec).dataset, cfg);
  for (const auto& prompt : generate_queries(pipe.dataset(), 8, 3)) {
    const auto q = pipe.parse(prompt);
    std::vector<StagedPrompt> stages;
    for (auto s : kAllStages) stages.push_back(pipe.prompt_for(q, s));
    expect_monotone(stages);
  }
}

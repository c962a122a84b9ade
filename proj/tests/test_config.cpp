#include <gtest/gtest.h>

#include <fstream>

#include "sleepgraph/config.hpp"
#include "sleepgraph/error.hpp"
#include "sleepgraph/pipeline.hpp"

using namespace sleepgraph;
namespace fs = std::filesystem;

namespace {

const fs::path kData = SG_TEST_DATA;

nlohmann::json base_config() {
  return nlohmann::json::parse(R"({"data": {"demographics": "corpus_demographics.csv", "days": "corpus_days.jsonl"}})");
}

Errc config_error(const nlohmann::json& j) {
  try {
    config_from_json(j, kData);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Usage;
}

}  // namespace

TEST(Config, MinimalUsesDefaults) {
  const auto c = config_from_json(base_config(), kData);
  EXPECT_EQ(c.demographics_path, kData / "corpus_demographics.csv");
  EXPECT_EQ(c.k_days, 3u);
  EXPECT_EQ(c.n_neighbors, 3u);
  EXPECT_EQ(c.forest.n_trees, 100u);
  EXPECT_EQ(c.generator.kind, "mock-marker");
  EXPECT_EQ(c.evaluator.kind, "mock-marker-evaluator");
}

TEST(Config, ReadsSections) {
  auto j = base_config();
  j["graph"] = {{"k_days", 5}, {"n_neighbors", 1}};
  j["forest"] = {{"n_trees", 10}, {"max_depth", 4}, {"features_per_split", nullptr}};
  j["prompt"] = {{"top_features", 2}};
  j["schema"] = {{"display_names", {{"Alex", "P07"}}}};
  j["generator"] = {{"kind", "http"}, {"endpoint_url", "http://127.0.0.1:1/v1/chat/completions"}, {"model", "m"}};
  j["eval"] = {{"shuffle_seed", 9}, {"parallelism", 2}};
  const auto c = config_from_json(j, kData);
  EXPECT_EQ(c.k_days, 5u);
  EXPECT_EQ(c.n_neighbors, 1u);
  EXPECT_EQ(c.forest.n_trees, 10u);
  EXPECT_EQ(c.forest.max_depth, 4u);
  EXPECT_FALSE(c.forest.features_per_split);
  EXPECT_EQ(c.top_features, 2u);
  EXPECT_EQ(c.display_names.at("Alex"), "P07");
  EXPECT_EQ(c.generator.kind, "http");
  EXPECT_EQ(c.shuffle_seed, 9u);
  EXPECT_EQ(c.eval_parallelism, 2u);
}

TEST(Config, Rejections) {
  auto j = base_config();
  j["bogus"] = 1;
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  j = base_config();
  j["graph"] = {{"k", 3}};
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  j = base_config();
  j["graph"] = {{"k_days", -1}};
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  j = base_config();
  j["data"]["days"] = "missing.jsonl";
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  j = base_config();
  j["generator"] = {{"kind", "http"}};
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  j = base_config();
  j["evaluator"] = {{"kind", "oracle"}};
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  j = base_config();
  j["eval"] = {{"failure_budget", 2.0}};
  EXPECT_EQ(config_error(j), Errc::InvalidConfig);
  EXPECT_EQ(config_error(nlohmann::json::object()), Errc::InvalidConfig);
}

TEST(Config, FileRoundTripWithRelativePaths) {
  const auto dir = fs::temp_directory_path() / "sleepgraph_config_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "data");
  fs::copy_file(kData / "corpus_demographics.csv", dir / "data" / "demo.csv");
  fs::copy_file(kData / "corpus_days.jsonl", dir / "data" / "days.jsonl");
  auto c = PipelineConfig::defaults();
  c.demographics_path = "data/demo.csv";
  c.days_path = "data/days.jsonl";
  c.k_days = 4;
  {
    std::ofstream out(dir / "config.json");
    out << config_to_json(c).dump(2);
  }
  const auto back = load_config(dir / "config.json");
  EXPECT_EQ(back.demographics_path, dir / "data" / "demo.csv");
  EXPECT_EQ(back.k_days, 4u);
  EXPECT_EQ(config_to_json(back)["graph"], config_to_json(c)["graph"]);
  EXPECT_THROW(load_config(dir / "nope.json"), Error);
}

TEST(Config, PipelineFromConfig) {
  auto c = config_from_json(base_config(), kData);
  c.forest.min_rows = 100;
  const Pipeline p(c);
  EXPECT_EQ(p.dataset().days().size(), 8u);
  const auto q = p.parse("P03 sleep score 2020-04-12");
  const auto imp = p.importance_for(q);
  ASSERT_TRUE(std::holds_alternative<std::string>(imp));
  const auto s4 = p.prompt_for(q, Stage::FeatureImportance);
  EXPECT_NE(s4.sections.back().text.find("unavailable"), std::string::npos);
}

TEST(Backends, FactoryKinds) {
  BackendConfig b;
  b.kind = "mock-hash";
  EXPECT_EQ(make_backend(b)->id(), "mock-hash");
  b.kind = "mock-marker-evaluator";
  EXPECT_EQ(make_backend(b)->id(), "mock-marker-evaluator");
  b.kind = "http";
  b.endpoint_url = "http://127.0.0.1:9/v1/chat/completions";
  b.api_key_env = "SLEEPGRAPH_TEST_UNSET_KEY";
  EXPECT_EQ(make_backend(b)->id(), "http:gpt-4");
}

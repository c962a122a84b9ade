#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "sleepgraph/error.hpp"
#include "sleepgraph/ingest.hpp"
#include "support.hpp"

using namespace sleepgraph;
using sgtest::day;
using sgtest::metrics;

namespace {

Errc load_error(const std::string& demo, const std::string& days) {
  std::istringstream d(demo), j(days);
  try {
    load_dataset_from_streams(d, j);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Usage;  // sentinel: no error
}

const std::string kHeader = "patient_id,age,gender,ethnicity\n";

}  // namespace

TEST(Ingest, TwoPatientsNoDays) {
  std::istringstream d(kHeader + "P01,21,female,Asian\nP02,30,male,\"Black, Caribbean\"\n"), j("");
  const auto ds = load_dataset_from_streams(d, j);
  EXPECT_EQ(ds.demographics().size(), 2u);
  EXPECT_TRUE(ds.days().empty());
  EXPECT_EQ(ds.find_patient("P02")->ethnicity, "Black, Caribbean");
}

TEST(Ingest, DayForUnknownPatient) {
  EXPECT_EQ(load_error(kHeader + "P01,21,female,Asian\n",
                       R"({"patient_id":"P99","date":"2020-04-12","metrics":{},"journal":null})"),
            Errc::UnknownPatient);
}

TEST(Ingest, DuplicateDayRejected) {
  const std::string row = R"({"patient_id":"P01","date":"2020-04-12","metrics":{"sleep_score":70}})";
  EXPECT_EQ(load_error(kHeader + "P01,21,female,Asian\n", row + "\n" + row + "\n"), Errc::DuplicateKey);
}

TEST(Ingest, DuplicatePatientIsCaseInsensitive) {
  EXPECT_EQ(load_error(kHeader + "P01,21,female,Asian\np01,22,male,White\n", ""), Errc::DuplicateKey);
}

TEST(Ingest, MalformedRowsCarryLineNumbers) {
  const std::string demo = kHeader + "P01,21,female,Asian\n";
  EXPECT_EQ(load_error("id,age\n", ""), Errc::MalformedRow);
  EXPECT_EQ(load_error(kHeader + "P01,9,female,Asian\n", ""), Errc::MalformedRow);
  EXPECT_EQ(load_error(kHeader + "P01,21,robot,Asian\n", ""), Errc::MalformedRow);
  EXPECT_EQ(load_error(demo, R"({"patient_id":"P01","date":"2020-02-30","metrics":{}})"), Errc::MalformedRow);
  EXPECT_EQ(load_error(demo, R"({"patient_id":"P01","date":"2020-04-12","metrics":{"sleep_score":101}})"),
            Errc::MalformedRow);
  EXPECT_EQ(load_error(demo, R"({"patient_id":"P01","date":"2020-04-12","metrics":{"hrv_ms":-1}})"),
            Errc::MalformedRow);
  EXPECT_EQ(load_error(demo, R"({"patient_id":"P01","date":"2020-04-12","metrics":{"steps":1}})"),
            Errc::MalformedRow);
  EXPECT_EQ(load_error(demo, R"({"patient_id":"P01","date":"2020-04-12","metrics":{},"mood":3})"),
            Errc::MalformedRow);

  std::istringstream d(demo), j("\n{\"patient_id\":\"P01\"}\n");
  try {
    load_dataset_from_streams(d, j, canonical_features(), "demo.csv", "days.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(e.detail().find("days.jsonl:2:"), std::string::npos) << e.detail();
  }
}

TEST(Ingest, SerializeRoundTrip) {
  const auto ds = sgtest::small_dataset();
  std::ostringstream demo, days;
  write_demographics_csv(ds, demo);
  write_days_jsonl(ds, days);
  std::istringstream d2(demo.str()), j2(days.str());
  const auto back = load_dataset_from_streams(d2, j2);
  EXPECT_EQ(back.demographics(), ds.demographics());
  EXPECT_EQ(back.days(), ds.days());
  std::ostringstream demo2, days2;
  write_demographics_csv(back, demo2);
  write_days_jsonl(back, days2);
  EXPECT_EQ(demo.str(), demo2.str());
  EXPECT_EQ(days.str(), days2.str());
}

TEST(Ingest, JsonlKeyOrderIsDocumented) {
  Dataset ds;
  ds.add_patient({"P01", 21, "female", "Asian"});
  ds.add_day(day("P01", "2020-04-12", {{"hrv_ms", 50.5}, {"sleep_score", std::nullopt}}, "ok"));
  std::ostringstream out;
  write_days_jsonl(ds, out);
  EXPECT_EQ(out.str(),
            "{\"patient_id\":\"P01\",\"date\":\"2020-04-12\",\"metrics\":{\"sleep_score\":null,"
            "\"hrv_ms\":50.5},\"journal\":\"ok\"}\n");
}

TEST(Standardizer, PopulationStdMatchesOracle) {
  Dataset ds({"x"});
  ds.add_patient({"P01", 21, "female", "Asian"});
  ds.add_day(day("P01", "2020-01-01", {{"x", 2.0}}));
  ds.add_day(day("P01", "2020-01-02", {{"x", 4.0}}));
  ds.add_day(day("P01", "2020-01-03", {{"x", 6.0}}));
  const auto s = fit_standardizer(ds);
  ASSERT_EQ(s.features().size(), 1u);
  EXPECT_DOUBLE_EQ(s.features()[0].mean, 4.0);
  EXPECT_NEAR(s.features()[0].std, 1.632993161855452, 1e-15);

  EXPECT_EQ(vectorize_day(day("P01", "2020-01-09", {{"x", 4.0}}), s).values, std::vector<double>{0.0});
  EXPECT_NEAR(vectorize_day(day("P01", "2020-01-09", {{"x", 6.0}}), s).values[0], 1.224744871391589, 1e-15);
}

TEST(Standardizer, ConstantFeatureDropped) {
  Dataset ds({"x", "c"});
  ds.add_patient({"P01", 21, "female", "Asian"});
  for (int i = 0; i < 3; ++i)
    ds.add_day(day("P01", "2020-01-0" + std::to_string(i + 1), {{"x", 1.0 + i}, {"c", 5.0}}));
  const auto s = fit_standardizer(ds);
  EXPECT_EQ(s.feature_names(), std::vector<std::string>{"x"});
  EXPECT_EQ(s.dropped(), std::vector<std::string>{"c"});
  // A declared-but-dropped feature is still accepted by vectorize_day.
  EXPECT_EQ(vectorize_day(day("P01", "2020-02-01", {{"c", 5.0}}), s).size(), 1u);
}

TEST(Standardizer, TooFewObservations) {
  Dataset ds({"x"});
  ds.add_patient({"P01", 21, "female", "Asian"});
  ds.add_day(day("P01", "2020-01-01", {{"x", 1.0}}));
  ds.add_day(day("P01", "2020-01-02", {{"x", std::nullopt}}));
  EXPECT_THROW(fit_standardizer(ds), Error);
}

TEST(Standardizer, FitDataHasZeroMeanUnitStd) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(50, 20);
  Dataset ds({"a", "b"});
  ds.add_patient({"P01", 21, "female", "Asian"});
  for (int i = 0; i < 500; ++i) {
    std::optional<double> b = (i % 7 == 0) ? std::nullopt : std::optional<double>(std::abs(n(rng)) * 1e3);
    ds.add_day(day("P01", Date{2020, 1, 1}.plus_days(i).iso(), {{"a", std::abs(n(rng))}, {"b", b}}));
  }
  const auto s = fit_standardizer(ds);
  for (std::size_t f = 0; f < 2; ++f) {
    std::vector<double> z;
    for (const auto& [key, rec] : ds.days())
      if (auto v = rec.metric(s.features()[f].name)) z.push_back(s.transform(f, *v));
    double mean = 0, ss = 0;
    for (double x : z) mean += x;
    mean /= static_cast<double>(z.size());
    for (double x : z) ss += (x - mean) * (x - mean);
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(z.size())), 1.0, 1e-9);
  }
}

TEST(Vectorize, MissingMetricsAreZeroAndAnnotationsAppended) {
  const auto ds = sgtest::small_dataset();
  const auto s = fit_standardizer(ds);
  const auto empty = vectorize_day(day("P03", "2021-01-01", {}), s);
  EXPECT_EQ(empty.values, std::vector<double>(6, 0.0));

  const auto themes = ThemeSet::defaults();
  auto ann = Annotation::neutral(themes);
  ann.sentiment = -0.5;
  ann.theme_scores[4].second = 1.0;
  const auto v = vectorize_day(day("P03", "2021-01-01", {}), s, &ann);
  ASSERT_EQ(v.size(), 13u);
  EXPECT_EQ(v.values[6], -0.5);
  EXPECT_EQ(v.values[11], 1.0);
  EXPECT_EQ(dimension_names(s, &themes)[11], "theme_stress");
  EXPECT_NE(v.schema_tag, empty.schema_tag);
}

TEST(Vectorize, UndeclaredFeatureIsSchemaMismatch) {
  const auto s = fit_standardizer(sgtest::small_dataset());
  try {
    vectorize_day(day("P03", "2021-01-01", {{"steps", 1.0}}), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SchemaMismatch);
  }
}

TEST(Ingest, SyntheticCohortScale) {
  SynthSpec spec;
  spec.days_per_patient = 234;
  const auto r = generate(spec);
  std::ostringstream demo, days;
  write_demographics_csv(r.dataset, demo);
  write_days_jsonl(r.dataset, days);
  std::istringstream d(demo.str()), j(days.str());
  const auto ds = load_dataset_from_streams(d, j);
  EXPECT_EQ(ds.demographics().size(), 20u);
  EXPECT_EQ(ds.days().size(), 20u * 234u);
}

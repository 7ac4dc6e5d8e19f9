#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "embedlab/report.hpp"
#include "embedlab/suites.hpp"

using namespace embedlab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("embedlab_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_run(const fs::path& dir, const std::string& file, double q, double slope, std::size_t violations) {
  Json j;
  j["kind"] = "moduli";
  j["q"] = q;
  j["violations"] = violations;
  j["fits"] = Json::array({Json{{"label", "large_t"}, {"envelope", "rho"}, {"slope", slope}},
                           Json{{"label", "large_t"}, {"envelope", "omega"}, {"slope", 0.9}}});
  write_text(dir / file, dump(j));
}

const ComparisonRow& row_for(const std::vector<ComparisonRow>& rows, const std::string& key) {
  for (const auto& r : rows)
    if (r.claim.key == key) return r;
  throw std::runtime_error("missing row " + key);
}

}  // namespace

TEST(Claims, EveryRowCarriesAKey) {
  for (const auto& c : compression_claims()) {
    EXPECT_FALSE(c.key.empty());
    EXPECT_FALSE(c.statement.empty());
  }
}

TEST(ReportTables, QuarticRunIsConsistent) {
  fs::path d = fresh_dir("q4");
  write_run(d, "moduli_q4.json", 4.0, 0.47, 0);
  auto rows = report_tables(d);
  const auto& r = row_for(rows, "lp_into_lq_p_lt_q");
  EXPECT_EQ(r.verdict, Verdict::Consistent);
  EXPECT_DOUBLE_EQ(r.claimed_lower, 0.5);
  EXPECT_EQ(r.run, "moduli_q4.json");
}

TEST(ReportTables, MissingRunIsNotRun) {
  fs::path d = fresh_dir("missing");
  write_run(d, "moduli_q4.json", 4.0, 0.47, 0);
  auto rows = report_tables(d);
  EXPECT_EQ(row_for(rows, "hilbert_into_lq_q_le_2").verdict, Verdict::NotRun);
  EXPECT_EQ(row_for(rows, "lp_into_lq_zero").verdict, Verdict::NotRun);
}

TEST(ReportTables, OneAndAHalfRunIsConsistent) {
  fs::path d = fresh_dir("q15");
  write_run(d, "moduli_q1.5.json", 1.5, 0.737, 0);
  EXPECT_EQ(row_for(report_tables(d), "hilbert_into_lq_q_le_2").verdict, Verdict::Consistent);
}

TEST(ReportTables, ViolationsOrLowSlopeAreInconsistent) {
  fs::path d = fresh_dir("bad");
  write_run(d, "a.json", 4.0, 0.47, 3);
  write_run(d, "b.json", 3.0, 0.2, 0);
  auto rows = report_tables(d);
  std::size_t inconsistent = 0;
  for (const auto& r : rows) inconsistent += r.verdict == Verdict::Inconsistent;
  EXPECT_EQ(inconsistent, 2u);
}

TEST(ReportTables, NonModuliFilesAreIgnored) {
  fs::path d = fresh_dir("other");
  write_text(d / "verify_mazur.json", dump(Json{{"kind", "mazur"}}));
  write_text(d / "broken.json", "{not json");
  EXPECT_THROW(report_tables(d), IoError);
}

TEST(ReportTables, EmptyOrMissingDirectory) {
  EXPECT_THROW(report_tables(fresh_dir("empty")), IoError);
  EXPECT_THROW(report_tables(fs::temp_directory_path() / "embedlab_test_does_not_exist"), IoError);
}

TEST(ReportTables, JsonAndTextRender) {
  fs::path d = fresh_dir("render");
  write_run(d, "moduli_q4.json", 4.0, 0.47, 0);
  auto rows = report_tables(d);
  Json j = comparison_json(rows);
  EXPECT_EQ(j.size(), compression_claims().size());
  std::string text = comparison_text(rows);
  EXPECT_NE(text.find("lp_into_lq_p_lt_q"), std::string::npos);
  EXPECT_NE(text.find("consistent"), std::string::npos);
}

TEST(CsvNumber, Formatting) {
  EXPECT_EQ(csv_number(std::nan("")), "");
  EXPECT_EQ(csv_number(INFINITY), "inf");
  EXPECT_EQ(csv_number(0.5), "0.5");
  EXPECT_EQ(std::stod(csv_number(0.1)), 0.1);
}

TEST(CsvWriter, RejectsRaggedRows) {
  CsvWriter w({"a", "b"});
  EXPECT_THROW(w.row({1.0}), std::invalid_argument);
}

TEST(RunConfig, EchoExcludesRuntimeOnlySettings) {
  RunConfig c;
  c.command = "moduli";
  Json j = c.to_json();
  EXPECT_FALSE(j.contains("threads"));
  EXPECT_FALSE(j.contains("out"));
  EXPECT_EQ(j["seed"], 7);
}

TEST(RunConfig, PerCommandPairDefaults) {
  RunConfig a;
  a.command = "verify";
  a.suite = "mazur";
  resolve_defaults(a);
  EXPECT_EQ(a.pairs, 100000u);
  RunConfig b;
  b.command = "moduli";
  resolve_defaults(b);
  EXPECT_EQ(b.pairs, 2000u);
  RunConfig c;
  c.command = "moduli";
  c.pairs = 17;
  resolve_defaults(c);
  EXPECT_EQ(c.pairs, 17u);
}

TEST(RunModuli, DeterministicOutput) {
  RunConfig c;
  c.command = "moduli";
  c.schedule = "warmup_l2";
  c.terms = 60;
  c.pairs = 600;
  c.bins = 20;
  resolve_defaults(c);
  set_threads(1);
  SuiteResult a = run_moduli(c);
  set_threads(3);
  SuiteResult b = run_moduli(c);
  set_threads(1);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(dump(a.report), dump(b.report));
  EXPECT_EQ(a.violations, 0u);
  EXPECT_EQ(a.report["kind"], "moduli");
}

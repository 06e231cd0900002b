// Aggregation metrics: accuracy, change rate, correctness thresholds,
// deductive density, grouped report tables, and CSV round-trips.

#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "mirage/metrics.hpp"

using mirage::FactSet;
using mirage::ReportTable;
using mirage::TaskResult;
using mirage::ThresholdProbe;
using mirage::ThresholdRecord;
using mirage::Vec;
using mirage::Verdict;

namespace {

TaskResult result_with(Verdict v, std::string scenario = "LT",
                       std::string task = "RI") {
  TaskResult r;
  r.scenario = std::move(scenario);
  r.task = std::move(task);
  r.dim = 3;
  r.n_facts = 5;
  r.verdict = v;
  return r;
}

FactSet five_fact_stream() {
  FactSet fs;
  fs.rule = mirage::MetaRule::pad(2, {0}, 7);
  for (int i = 0; i < 5; ++i) {
    const Vec x = {i, i + 1};
    fs.facts.push_back({x, fs.rule.apply(x)});
  }
  return fs;
}

}  // namespace

TEST_CASE("accuracy counts unparseable responses as failures by default") {
  const std::vector<Verdict> vs = {Verdict::Correct, Verdict::Incorrect,
                                   Verdict::Unparseable, Verdict::Correct};
  CHECK(mirage::accuracy(vs) == 0.5);
  CHECK(mirage::accuracy(vs, /*drop_unparseable=*/true) ==
        Catch::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(mirage::accuracy(std::vector<Verdict>{}),
                  mirage::EmptyInput);
  // Dropping can empty the denominator entirely.
  CHECK_THROWS_AS(
      mirage::accuracy(std::vector<Verdict>{Verdict::Unparseable}, true),
      mirage::EmptyInput);
}

TEST_CASE("change rate is the relative accuracy drop") {
  CHECK(mirage::change_rate(0.8, 0.2) == Catch::Approx(0.75));
  CHECK(mirage::change_rate(0.5, 0.5) == 0.0);
  // Improvement under treatment is a negative change rate.
  CHECK(mirage::change_rate(0.4, 0.5) == Catch::Approx(-0.25));
  CHECK_THROWS_AS(mirage::change_rate(0.0, 0.1), mirage::UndefinedCR);
}

TEST_CASE("two-decimal display rounding on reference change-rate pairs") {
  using mirage::change_rate;
  using mirage::round2_half_up;
  CHECK(round2_half_up(change_rate(0.50, 0.13)) == 0.74);
  CHECK(round2_half_up(change_rate(0.66, 0.15)) == 0.77);
  CHECK(round2_half_up(change_rate(0.37, 0.07)) == 0.81);
  CHECK(round2_half_up(change_rate(0.65, 0.22)) == 0.66);

  CHECK(round2_half_up(0.005) == 0.01);  // halves round up
  CHECK(round2_half_up(0.004999) == 0.0);
  CHECK(round2_half_up(-0.005) == 0.0);  // toward +infinity
}

TEST_CASE("task accuracy averages the extra test points") {
  TaskResult r = result_with(Verdict::Correct);
  r.extra_verdicts = {Verdict::Correct, Verdict::Incorrect,
                      Verdict::Correct, Verdict::Unparseable};
  CHECK(mirage::task_accuracy(r) == 0.5);
  CHECK_THROWS_AS(mirage::task_accuracy(result_with(Verdict::Correct)),
                  mirage::EmptyInput);
}

TEST_CASE("deductive density averages over origin-correct tasks only") {
  TaskResult good = result_with(Verdict::Correct);
  good.extra_verdicts = {Verdict::Correct, Verdict::Correct};
  TaskResult half = result_with(Verdict::Correct);
  half.extra_verdicts = {Verdict::Correct, Verdict::Incorrect};
  TaskResult ignored = result_with(Verdict::Incorrect);
  ignored.extra_verdicts = {Verdict::Correct, Verdict::Correct};

  CHECK(mirage::deductive_density({good, half, ignored}) ==
        Catch::Approx(0.75));

  // Absent when no origin was answered correctly.
  CHECK_FALSE(mirage::try_deductive_density({ignored}).has_value());
  CHECK_THROWS_AS(mirage::deductive_density({ignored}),
                  mirage::UndefinedDensity);
}

TEST_CASE("thresholds record the first success per task") {
  const FactSet stream = five_fact_stream();

  const ThresholdRecord oracle = mirage::compute_thresholds(
      mirage::oracle_probe(), stream, {9, 9}, 5);
  REQUIRE(oracle.induction_threshold.has_value());
  CHECK(*oracle.induction_threshold == 1);
  CHECK(*oracle.deduction_threshold == 1);

  const ThresholdRecord never = mirage::compute_thresholds(
      mirage::never_correct_probe(), stream, {9, 9}, 5);
  CHECK_FALSE(never.induction_threshold.has_value());
  CHECK_FALSE(never.deduction_threshold.has_value());
  CHECK(never.ri_correct == std::vector<bool>{false, false, false, false,
                                              false});
}

TEST_CASE("non-monotone correctness keeps the first success and the curve") {
  ThresholdProbe flaky;
  flaky.rule_induction = [](const FactSet& prefix) {
    const int k = static_cast<int>(prefix.size());
    return k == 2 || k == 4;  // succeeds, regresses, succeeds again
  };
  flaky.example_inference = [](const FactSet&, const Vec&) { return false; };

  const ThresholdRecord rec = mirage::compute_thresholds(
      flaky, five_fact_stream(), {9, 9}, 5);
  REQUIRE(rec.induction_threshold.has_value());
  CHECK(*rec.induction_threshold == 2);
  CHECK(rec.ri_correct == std::vector<bool>{false, true, false, true, false});
  CHECK_FALSE(rec.deduction_threshold.has_value());
}

TEST_CASE("probe failures become notes and count as incorrect") {
  ThresholdProbe crashy;
  crashy.rule_induction = [](const FactSet& prefix) {
    if (prefix.size() == 1) throw mirage::TransportError("boom");
    return true;
  };
  crashy.example_inference = [](const FactSet&, const Vec&) { return true; };

  const ThresholdRecord rec = mirage::compute_thresholds(
      crashy, five_fact_stream(), {9, 9}, 3);
  REQUIRE(rec.induction_threshold.has_value());
  CHECK(*rec.induction_threshold == 2);
  CHECK(rec.ri_correct[0] == false);
  REQUIRE_FALSE(rec.notes.empty());
  CHECK(rec.notes[0].find("boom") != std::string::npos);

  CHECK_THROWS_AS(
      mirage::compute_thresholds(crashy, five_fact_stream(), {9, 9}, 6),
      mirage::ConfigError);
}

TEST_CASE("threshold distributions tabulate per fact count") {
  ThresholdRecord a;
  a.max_n = 3;
  a.induction_threshold = 2;
  a.deduction_threshold = 1;
  ThresholdRecord b;
  b.max_n = 3;  // both thresholds absent
  const ReportTable t = mirage::threshold_report({a, b});
  REQUIRE(t.columns.size() == 3);
  CHECK(t.columns[0] == "facts");
  // Rows 1..3 then the absent row.
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0] == std::vector<std::string>{"1", "0", "1"});
  CHECK(t.rows[1] == std::vector<std::string>{"2", "1", "0"});
  CHECK(t.rows[3] == std::vector<std::string>{"absent", "1", "1"});
}

TEST_CASE("grouped accuracy reports order keys numerically") {
  TaskResult a = result_with(Verdict::Correct);
  a.dim = 2;
  TaskResult b = result_with(Verdict::Incorrect);
  b.dim = 10;
  TaskResult c = result_with(Verdict::Unparseable);
  c.dim = 3;

  const ReportTable t = mirage::accuracy_report({a, b, c}, {"dim"}, false);
  CHECK(mirage::to_text(t) ==
        "dim  tasks  accuracy  density\n"
        "2    1      1.0000    -\n"
        "3    1      0.0000    -\n"
        "10   1      0.0000    -\n");

  // Dropping unparseable empties the dim-3 group's denominator.
  const ReportTable dropped = mirage::accuracy_report({a, b, c}, {"dim"}, true);
  CHECK(mirage::to_text(dropped) ==
        "dim  tasks  accuracy  density\n"
        "2    1      1.0000    -\n"
        "3    1      -         -\n"
        "10   1      0.0000    -\n");
}

TEST_CASE("grouping keys cover the task vocabulary") {
  TaskResult r = result_with(Verdict::Correct, "ST", "EI");
  r.method = "io";
  r.perturbed = true;
  r.epsilon = 1;
  r.fact_class = "IF";
  r.eta_unbounded = true;
  r.extra_verdicts = {Verdict::Correct};

  const ReportTable t = mirage::accuracy_report(
      {r}, {"scenario", "task", "method", "dim", "n", "perturbed", "class",
            "epsilon", "eta"},
      false);
  REQUIRE(t.rows.size() == 1);
  const std::vector<std::string>& row = t.rows[0];
  CHECK(row[0] == "ST");
  CHECK(row[1] == "EI");
  CHECK(row[2] == "io");
  CHECK(row[3] == "3");
  CHECK(row[4] == "5");
  CHECK(row[5] == "yes");
  CHECK(row[6] == "IF");
  CHECK(row[7] == "1");
  CHECK(row[8] == "inf");
  // tasks, accuracy, density
  CHECK(row[9] == "1");
  CHECK(row[10] == "1.0000");
  CHECK(row[11] == "1.0000");

  TaskResult bare = result_with(Verdict::Correct);
  const ReportTable u = mirage::accuracy_report(
      {bare}, {"class", "epsilon", "eta"}, false);
  CHECK(u.rows[0][0] == "-");
  CHECK(u.rows[0][1] == "-");
  CHECK(u.rows[0][2] == "-");

  CHECK_THROWS_AS(mirage::accuracy_report({bare}, {"nonsense"}, false),
                  mirage::ConfigError);
}

TEST_CASE("density in reports averages only groups with extra points") {
  TaskResult with = result_with(Verdict::Correct);
  with.extra_verdicts = {Verdict::Correct, Verdict::Incorrect};
  TaskResult without = result_with(Verdict::Correct);

  const ReportTable t =
      mirage::accuracy_report({with, without}, {"scenario"}, false);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].back() == "0.5000");
}

TEST_CASE("change-rate reports pair baseline and treated groups") {
  std::vector<TaskResult> baseline = {
      result_with(Verdict::Correct), result_with(Verdict::Correct),
      result_with(Verdict::Incorrect), result_with(Verdict::Incorrect),
      result_with(Verdict::Correct, "CG"),
  };
  std::vector<TaskResult> treated = {
      result_with(Verdict::Correct), result_with(Verdict::Incorrect),
      result_with(Verdict::Incorrect), result_with(Verdict::Incorrect),
      // No treated CG tasks: that one-sided group is omitted.
      result_with(Verdict::Correct, "ST"),
  };

  const ReportTable t =
      mirage::change_rate_report(baseline, treated, {"scenario"}, false);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "LT");
  CHECK(t.rows[0][1] == "0.5000");  // before
  CHECK(t.rows[0][2] == "0.2500");  // after
  CHECK(t.rows[0][3] == "0.50");    // change rate, two decimals

  // A zero baseline makes the rate undefined, rendered as "-".
  std::vector<TaskResult> zero = {result_with(Verdict::Incorrect)};
  std::vector<TaskResult> after = {result_with(Verdict::Correct)};
  const ReportTable u = mirage::change_rate_report(zero, after, {"scenario"},
                                                   false);
  CHECK(u.rows[0][3] == "-");
}

TEST_CASE("text tables align with a two-space gutter") {
  ReportTable t;
  t.columns = {"name", "n"};
  t.rows = {{"x", "1"}, {"longer", "23"}};
  CHECK(mirage::to_text(t) ==
        "name    n\n"
        "x       1\n"
        "longer  23\n");
}

TEST_CASE("csv output quotes exactly the fields that need it") {
  ReportTable t;
  t.columns = {"a,b", "c\"d", "e f"};
  t.rows = {{"line\nbreak", " pad ", "plain"}, {"", "cr\rhere", ","}};
  CHECK(mirage::to_csv(t) ==
        "\"a,b\",\"c\"\"d\",e f\n"
        "\"line\nbreak\",\" pad \",plain\n"
        ",\"cr\rhere\",\",\"\n");
}

TEST_CASE("csv round-trips byte-identically") {
  ReportTable t;
  t.columns = {"k", "v", "note"};
  t.rows = {{"plain", "1.0000", "with, comma"},
            {"quo\"te", "", " leading space"},
            {"multi\nline", "x\ry", "trailing space "}};
  const std::string once = mirage::to_csv(t);
  const ReportTable back = mirage::parse_csv(once);
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);
  CHECK(mirage::to_csv(back) == once);

  // CRLF input is tolerated.
  const ReportTable crlf = mirage::parse_csv("a,b\r\n1,2\r\n");
  REQUIRE(crlf.rows.size() == 1);
  CHECK(crlf.rows[0] == std::vector<std::string>{"1", "2"});

  CHECK_THROWS_AS(mirage::parse_csv("a,b\n\"unterminated\n"),
                  mirage::ParseError);
}

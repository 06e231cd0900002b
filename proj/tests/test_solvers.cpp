// Reference solvers: version-space induction, candidate scoring, refinement
// loops, majority voting, nearest-neighbor prediction, and the threshold
// probe property.

#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "mirage/solve.hpp"

using mirage::CandidateScore;
using mirage::EnumerativeProposer;
using mirage::FactSet;
using mirage::MetaRule;
using mirage::ParsedAnswer;
using mirage::ParsedRule;
using mirage::RefineResult;
using mirage::Rng;
using mirage::Scenario;
using mirage::ScriptedProposer;
using mirage::StopReason;
using mirage::Vec;

namespace {

using Rounds = std::vector<std::vector<std::string>>;

FactSet facts_for(const MetaRule& rule, int n, std::uint64_t seed) {
  Rng rng(seed);
  return mirage::generate_fact_set(rule, n, {}, rng);
}

}  // namespace

TEST_CASE("scoring a rule against facts counts exact agreements") {
  const MetaRule truth = MetaRule::add(3, {1, 2}, {0, 1});
  const FactSet fs = facts_for(truth, 5, 11);

  const mirage::ScoreResult full = mirage::score_rule_on_facts(truth, fs);
  CHECK(full.correct == 5);
  CHECK(full.errors.empty());

  const MetaRule wrong = MetaRule::pad(3, {0}, 9);
  const mirage::ScoreResult partial = mirage::score_rule_on_facts(wrong, fs);
  CHECK(partial.correct + static_cast<int>(partial.errors.size()) == 5);
  for (const auto& err : partial.errors) {
    CHECK(err.actual == wrong.apply(fs.facts[err.fact_index].input));
  }
}

TEST_CASE("version-space induction recovers the generating rule") {
  const MetaRule truth = MetaRule::map_in_place(3, {0, 2}, 2, 1);
  const FactSet fs = facts_for(truth, 6, 21);

  const std::vector<MetaRule> fits = mirage::enumerative_induce(fs);
  REQUIRE_FALSE(fits.empty());

  bool contains_truth = false;
  MetaRule prev;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    // Every member explains every fact.
    CHECK(mirage::score_rule_on_facts(fits[i], fs).correct == 6);
    if (fits[i] == truth) contains_truth = true;
    if (i > 0) CHECK(prev < fits[i]);  // canonical enumeration order
    prev = fits[i];
  }
  CHECK(contains_truth);

  FactSet empty;
  empty.rule = truth;
  CHECK_THROWS_AS(mirage::enumerative_induce(empty), mirage::EmptyInput);
}

TEST_CASE("more facts can only narrow the version space") {
  const MetaRule truth = MetaRule::copy(2, 0, {1});
  const FactSet wide = facts_for(truth, 2, 31);
  FactSet narrow = wide;
  Rng rng(32);
  const FactSet extra = mirage::generate_fact_set(truth, 6, {}, rng);
  narrow.facts.insert(narrow.facts.end(), extra.facts.begin(),
                      extra.facts.end());

  const std::vector<MetaRule> before = mirage::enumerative_induce(wide);
  const std::vector<MetaRule> after =
      mirage::filter_consistent(before, narrow);
  CHECK(after.size() <= before.size());
  for (const MetaRule& f : after) {
    CHECK(mirage::score_rule_on_facts(f, narrow).correct ==
          static_cast<int>(narrow.size()));
  }
}

TEST_CASE("candidate scoring works on parsed rules in both interpretations") {
  const MetaRule truth = MetaRule::add(2, {0, 1}, {0});
  const FactSet fs = facts_for(truth, 4, 41);

  const ParsedRule good = mirage::parse_rule_response(
      "Rule: [A, B] -> [A+B, B]", Scenario::lt(), 2);
  const CandidateScore cs = mirage::score_candidate(good, fs, Scenario::lt());
  CHECK(cs.correct == 4);
  CHECK(cs.error_lines.empty());

  const ParsedRule bad = mirage::parse_rule_response(
      "Rule: [A, B] -> [A, B+1]", Scenario::lt(), 2);
  const CandidateScore worse = mirage::score_candidate(bad, fs, Scenario::lt());
  CHECK(worse.correct < 4);
  REQUIRE_FALSE(worse.error_lines.empty());
  CHECK(worse.error_lines[0].find("Your rule gives:") != std::string::npos);

  // String scenario: candidates are judged against the displayed letter
  // facts.
  const ParsedRule st_good = mirage::parse_rule_response(
      "Rule: AB -> [AB, B]", Scenario::st(), 2);
  CHECK(mirage::score_candidate(st_good, fs, Scenario::st()).correct == 4);
}

TEST_CASE("the enumerative proposer emits canonical texts that fit") {
  const MetaRule truth = MetaRule::swap(3, {0}, {2});
  const FactSet fs = facts_for(truth, 5, 51);
  EnumerativeProposer prop;

  const std::vector<std::string> texts =
      prop.propose(fs, Scenario::lt(), "", 3);
  REQUIRE_FALSE(texts.empty());
  const ParsedRule first = mirage::parse_rule_response(
      texts[0], Scenario::lt(), 3);
  CHECK(mirage::score_candidate(first, fs, Scenario::lt()).correct == 5);

  CHECK(prop.critique(fs, Scenario::lt(), texts[0]) == "correct");
  const std::string complaint =
      prop.critique(fs, Scenario::lt(), "Rule: [A, B, C] -> [9, 9, 9]");
  CHECK(complaint.find("misses") != std::string::npos);
}

TEST_CASE("the scripted proposer pads, truncates, and exhausts") {
  ScriptedProposer prop(Rounds{{"one"}, {"a", "b", "c"}});
  FactSet fs;
  const std::vector<std::string> r1 = prop.propose(fs, Scenario::lt(), "", 3);
  CHECK(r1 == std::vector<std::string>{"one", "one", "one"});
  const std::vector<std::string> r2 = prop.propose(fs, Scenario::lt(), "", 2);
  CHECK(r2 == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(prop.propose(fs, Scenario::lt(), "", 1),
                  mirage::ProposerFailure);
}

TEST_CASE("hypothesis refinement stops at a full fit") {
  const MetaRule truth = MetaRule::pad(2, {0}, 7);
  const FactSet fs = facts_for(truth, 4, 61);

  ScriptedProposer prop(Rounds{
      {"Rule: [A, B] -> [A+B, B]", "gibberish"},
      {mirage::canonical_rule_answer(truth, Scenario::lt())},
  });
  const RefineResult r =
      mirage::hypothesis_refine(prop, fs, Scenario::lt(), 5, 2);

  CHECK(r.trace.stop == StopReason::FullFit);
  CHECK(r.best_score == 4);
  CHECK(r.trace.iterations.size() == 2);
  // Unparseable candidates score -1 and are never selected.
  CHECK(r.trace.iterations[0].scores.size() == 2);
  CHECK(r.trace.iterations[0].scores[1] == -1);
  CHECK(r.trace.iterations[0].best_index == 0);
  // Feedback is attached to every round that another round follows.
  CHECK_FALSE(r.trace.iterations[0].feedback.empty());
  CHECK(r.trace.iterations[0].feedback.find("Your best rule so far") !=
        std::string::npos);
  CHECK(r.trace.iterations[1].feedback.empty());
  // The best-so-far curve never decreases.
  for (std::size_t i = 1; i < r.trace.best_score_history.size(); ++i) {
    CHECK(r.trace.best_score_history[i - 1] <=
          r.trace.best_score_history[i]);
  }
  REQUIRE(r.best_rule.has_value());
  CHECK(r.best_rule->apply({3, 4}) == truth.apply({3, 4}));
}

TEST_CASE("hypothesis refinement hits the iteration cap on stubborn scripts") {
  const MetaRule truth = MetaRule::pad(2, {0}, 7);
  const FactSet fs = facts_for(truth, 4, 62);

  ScriptedProposer prop(Rounds{
      {"Rule: [A, B] -> [A+B, B]"},
      {"Rule: [A, B] -> [A+B, B]"},
      {"Rule: [A, B] -> [A+B, B]"},
  });
  const RefineResult r =
      mirage::hypothesis_refine(prop, fs, Scenario::lt(), 3, 1);
  CHECK(r.trace.stop == StopReason::IterationCap);
  CHECK(r.trace.iterations.size() == 3);
  CHECK(r.best_score < 4);
}

TEST_CASE("a mid-loop proposer failure aborts with the partial trace") {
  const MetaRule truth = MetaRule::pad(2, {0}, 7);
  const FactSet fs = facts_for(truth, 4, 63);

  ScriptedProposer prop(Rounds{{"Rule: [A, B] -> [A+B, B]"}});  // one round only
  try {
    mirage::hypothesis_refine(prop, fs, Scenario::lt(), 3, 1);
    FAIL("expected RefineAbort");
  } catch (const mirage::RefineAbort& e) {
    CHECK(e.trace.iterations.size() == 1);
    CHECK(std::string(e.what()).find("script exhausted") !=
          std::string::npos);
  }
}

TEST_CASE("when nothing fits, refinement keeps the best-effort candidate") {
  const MetaRule truth = MetaRule::copy(3, 0, {1, 2});
  Rng gen(71), perturb(72);
  const FactSet clean = mirage::generate_fact_set(truth, 5, {}, gen);
  const FactSet fs = mirage::perturb_fact_set(clean, perturb);

  EnumerativeProposer prop;
  const RefineResult r =
      mirage::hypothesis_refine(prop, fs, Scenario::lt(), 2, 3);
  // The corrupted fact keeps a full fit out of reach for the generating
  // rule; the best effort still explains at least the other four facts.
  CHECK(r.best_score >= 4);
  REQUIRE(r.best_rule.has_value());
}

TEST_CASE("self-refinement returns the last iterate") {
  const MetaRule truth = MetaRule::pad(2, {1}, 3);
  const FactSet fs = facts_for(truth, 4, 81);
  const std::string right =
      mirage::canonical_rule_answer(truth, Scenario::lt());

  ScriptedProposer prop(Rounds{{"Rule: [A, B] -> [B, A]"}, {right}},
                        {"The rule fails fact 1."});
  const RefineResult r = mirage::self_refine(prop, fs, Scenario::lt(), 2);
  CHECK(r.trace.stop == StopReason::IterationCap);
  CHECK(r.best_text == right);
  CHECK(r.best_score == 4);
  CHECK(r.trace.iterations.size() == 2);
  CHECK(r.trace.iterations[0].feedback == "The rule fails fact 1.");
}

TEST_CASE("self-refinement can stop on an approving critique") {
  const MetaRule truth = MetaRule::pad(2, {1}, 3);
  const FactSet fs = facts_for(truth, 4, 82);

  ScriptedProposer prop(Rounds{{"Rule: [A, B] -> [B, A]"}, {"unreached"}},
                        {"Looks CORRECT to me."});
  const RefineResult r = mirage::self_refine(prop, fs, Scenario::lt(), 5,
                                             /*stop_on_approval=*/true);
  CHECK(r.trace.stop == StopReason::Approval);
  CHECK(r.trace.iterations.size() == 1);
  CHECK(r.best_text == "Rule: [A, B] -> [B, A]");
}

TEST_CASE("majority voting breaks ties toward the earliest class") {
  const std::vector<int> items = {3, 1, 1, 3, 2};
  const std::size_t i = mirage::majority_index(
      items, [](int a, int b) { return a == b; });
  CHECK(items[i] == 3);  // 3 and 1 both appear twice; 3 was seen first
  CHECK(i == 0);
}

TEST_CASE("answer-level self-consistency picks the modal answer") {
  ParsedAnswer a, b;
  a.values = {1, 2};
  b.values = {3, 4};
  const std::vector<ParsedAnswer> samples = {b, a, b};
  const ParsedAnswer& winner = mirage::self_consistency(samples);
  CHECK(winner.values == Vec{3, 4});
  CHECK_THROWS_AS(mirage::self_consistency(std::vector<ParsedAnswer>{}),
                  mirage::EmptyInput);
}

TEST_CASE("rule-level self-consistency groups semantic equivalents") {
  // Two surface forms of the same function outvote a distinct singleton,
  // even though all three texts differ.
  const ParsedRule r1 = mirage::parse_rule_response(
      "Rule: [A, B] -> [B+A, B]", Scenario::lt(), 2);
  const ParsedRule r2 = mirage::parse_rule_response(
      "Rule: [A, B] -> [A+B, B]", Scenario::lt(), 2);
  const ParsedRule other = mirage::parse_rule_response(
      "Rule: [A, B] -> [7, B]", Scenario::lt(), 2);

  const std::vector<ParsedRule> majority = {other, r1, r2};
  CHECK(mirage::self_consistency(majority, 2, {}).apply({1, 1}) == Vec{2, 1});

  // A 1-1 tie goes to the class seen first.
  const std::vector<ParsedRule> tie = {other, r1};
  CHECK(mirage::self_consistency(tie, 2, {}).apply({1, 1}) == Vec{7, 1});
}

TEST_CASE("nearest-neighbor prediction copies the closest fact's output") {
  FactSet fs;
  fs.rule = MetaRule::pad(2, {0}, 1);  // placeholder; never consulted
  fs.facts = {{{0, 0}, {9, 9}}, {{5, 5}, {1, 1}}, {{5, 6}, {2, 2}}};

  const mirage::NeighborPrediction p = mirage::neighbor_predict(fs, {5, 7});
  CHECK(p.neighbor_index == 2);
  CHECK(p.distance == 1.0);
  CHECK(p.lenient == Vec{2, 2});
  CHECK_FALSE(p.strict.has_value());  // no exact input match

  // Ties go to the smallest fact index.
  const mirage::NeighborPrediction tie = mirage::neighbor_predict(fs, {5, 4});
  CHECK(tie.neighbor_index == 1);

  // Strict mode engages only when an observed input equals the test input.
  const mirage::NeighborPrediction exact = mirage::neighbor_predict(fs, {0, 0});
  REQUIRE(exact.strict.has_value());
  CHECK(*exact.strict == Vec{9, 9});

  FactSet empty;
  CHECK_THROWS_AS(mirage::neighbor_predict(empty, {0, 0}),
                  mirage::EmptyInput);
}

TEST_CASE("the reference probe never deduces later than it induces") {
  const mirage::ThresholdProbe probe = mirage::make_reference_probe();
  Rng rng(0xabcd);
  int present = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const MetaRule rule = mirage::sample_rule(3, rng);
    mirage::GenerationConstraint c;
    c.target = mirage::NeighborhoodTarget{{4, 4, 4}, 0, std::nullopt,
                                          mirage::DistanceMetric::chebyshev()};
    FactSet stream;
    try {
      stream = mirage::generate_fact_set(rule, 6, c, rng);
    } catch (const mirage::GenerationExhausted&) {
      continue;  // degenerate rule; irrelevant to the property
    }
    const mirage::ThresholdRecord rec =
        mirage::compute_thresholds(probe, stream, {4, 4, 4}, 6);
    if (rec.induction_threshold) {
      ++present;
      REQUIRE(rec.deduction_threshold.has_value());
      CHECK(*rec.deduction_threshold <= *rec.induction_threshold);
    }
  }
  CHECK(present > 0);
}

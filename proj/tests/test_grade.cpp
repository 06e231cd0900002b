// Response parsing and judging: expression grammar, per-scenario stanza
// extraction, the verdict taxonomy, and parser totality under fuzzing.

#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "mirage/grade.hpp"
#include "mirage/render.hpp"

using mirage::FactSet;
using mirage::Judgment;
using mirage::MetaRule;
using mirage::ParsedAnswer;
using mirage::ParsedRule;
using mirage::ParsePolicy;
using mirage::RenderedQuestion;
using mirage::Rng;
using mirage::Scenario;
using mirage::TaskKind;
using mirage::Vec;
using mirage::Verdict;

namespace {

FactSet sample_facts() {
  FactSet fs;
  fs.rule = MetaRule::add(3, {1, 2}, {0, 1});
  for (const Vec& x : {Vec{3, 4, 7}, Vec{1, 0, 2}, Vec{5, 2, 1}}) {
    fs.facts.push_back({x, fs.rule.apply(x)});
  }
  return fs;
}

RenderedQuestion question(TaskKind task, const Scenario& sc) {
  Rng rng(1);
  const std::optional<Vec> xt =
      task == TaskKind::ExampleInference ? std::optional<Vec>({2, 6, 3})
                                         : std::nullopt;
  return mirage::render_question(sample_facts(), task, sc, xt, 0, rng);
}

}  // namespace

TEST_CASE("list rules parse into applicable expressions") {
  const ParsedRule r = mirage::parse_rule_response(
      "Rule: [A, B, C] -> [B+C, B+C, C]", Scenario::lt(), 3);
  CHECK_FALSE(r.string_mode);
  CHECK(r.dim == 3);
  CHECK(r.apply({3, 4, 7}) == Vec{11, 11, 7});
  CHECK(r.apply({0, 0, 0}) == Vec{0, 0, 0});
}

TEST_CASE("coefficients may be written with or without an asterisk") {
  for (const char* text : {"Rule: [A, B] -> [2B, A]", "Rule: [A, B] -> [2*B, A]",
                           "Rule: [A, B] -> [B*2, A]",
                           "Rule: [A, B] -> [B+B, A]"}) {
    const ParsedRule r =
        mirage::parse_rule_response(text, Scenario::lt(), 2);
    CHECK(r.apply({3, 4}) == Vec{8, 3});
  }
}

TEST_CASE("affine offsets and constants parse") {
  const ParsedRule r = mirage::parse_rule_response(
      "Rule: [A, B] -> [3A+1, 7]", Scenario::lt(), 2);
  CHECK(r.apply({2, 9}) == Vec{7, 7});
  // Canonical text normalizes adjacency multiplication to the "k*X" form.
  CHECK(r.canonical_text() == "3*A+1, 7");
}

TEST_CASE("surrounding prose is ignored and the last stanza wins") {
  const std::string response =
      "Looking at the facts, the first slot copies C.\n"
      "Rule: [A, B, C] -> [C, B, C]\n"
      "Wait, that fails fact 2. Correcting:\n"
      "Rule: [A, B, C] -> [B+C, B+C, C]\n";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::lt(), 3);
  CHECK(r.apply({3, 4, 7}) == Vec{11, 11, 7});

  ParsePolicy first_wins;
  first_wins.last_stanza_wins = false;
  const ParsedRule r0 =
      mirage::parse_rule_response(response, Scenario::lt(), 3, first_wins);
  CHECK(r0.apply({3, 4, 7}) == Vec{7, 4, 7});
}

TEST_CASE("a malformed final stanza falls back to an earlier parseable one") {
  const std::string response =
      "Rule: [A, B] -> [B, A]\n"
      "Actually, maybe:\n"
      "Rule: [A, B] -> [B, ???]\n";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::lt(), 2);
  CHECK(r.apply({1, 2}) == Vec{2, 1});
}

TEST_CASE("parser failures carry the error taxonomy") {
  // No stanza at all.
  CHECK_THROWS_AS(
      mirage::parse_rule_response("I give up.", Scenario::lt(), 3),
      mirage::FormatError);
  // Wrong slot count.
  CHECK_THROWS_AS(mirage::parse_rule_response("Rule: [A, B, C] -> [A, B]",
                                              Scenario::lt(), 3),
                  mirage::ArityError);
  // Unknown variable for the dimension.
  CHECK_THROWS_AS(mirage::parse_rule_response("Rule: [A, B] -> [D, A]",
                                              Scenario::lt(), 2),
                  mirage::ParseError);
  // Nonlinear arithmetic is not part of the list grammar.
  CHECK_THROWS_AS(mirage::parse_rule_response("Rule: [A, B] -> [A*B, A]",
                                              Scenario::lt(), 2),
                  mirage::ParseError);
}

TEST_CASE("code rules parse from the assignment line") {
  const std::string response =
      "Rule:\n"
      "def f(A, B, C):\n"
      "    A, B, C = B+C, B+C, C\n"
      "    return A, B, C";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::cg(), 3);
  CHECK(r.apply({3, 4, 7}) == Vec{11, 11, 7});
}

TEST_CASE("code rules fall back to the return line") {
  const std::string response =
      "def f(A, B):\n"
      "    return B, A";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::cg(), 2);
  CHECK(r.apply({1, 2}) == Vec{2, 1});
}

TEST_CASE("code slots may hold nonlinear arithmetic") {
  const std::string response =
      "Rule:\n"
      "def f(A, B):\n"
      "    A, B = A*A, B\n"
      "    return A, B";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::cg(), 2);
  CHECK(r.apply({3, 5}) == Vec{9, 5});

  // The fallback is a policy choice; without it the same slot is an error.
  ParsePolicy strict;
  strict.pointwise_fallback = false;
  CHECK_THROWS_AS(
      mirage::parse_rule_response(response, Scenario::cg(), 2, strict),
      mirage::ParseError);
}

TEST_CASE("story rules strip object nouns") {
  const std::string response =
      "Rule: If there are A chairs, B tables, C pens. After the trade, "
      "there are B+C chairs, B+C tables, C pens.";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::rp("trade"), 3);
  CHECK(r.apply({3, 4, 7}) == Vec{11, 11, 7});
}

TEST_CASE("string rules parse components and literals") {
  const ParsedRule r = mirage::parse_rule_response(
      "Rule: ABC -> [BC, BC, C]", Scenario::st(), 3);
  CHECK(r.string_mode);
  CHECK(r.apply_string({"d", "e", "h"}) ==
        mirage::StrVec{"eh", "eh", "h"});

  const ParsedRule rep = mirage::parse_rule_response(
      "Rule: AB -> [AAa, B]", Scenario::st(), 2);
  CHECK(rep.apply_string({"d", "e"}) == mirage::StrVec{"dda", "e"});

  const ParsedRule empty = mirage::parse_rule_response(
      "Rule: AB -> [\"\", B]", Scenario::st(), 2);
  CHECK(empty.apply_string({"d", "e"}) == mirage::StrVec{"", "e"});
  CHECK(empty.canonical_text() == "\"\", B");

  CHECK_THROWS_AS(mirage::parse_rule_response("Rule: AB -> [Az, B]",
                                              Scenario::st(), 2),
                  mirage::InvalidAlphabet);
  CHECK_THROWS_AS(mirage::parse_rule_response("Rule: AB -> [A\", B]",
                                              Scenario::st(), 2),
                  mirage::ParseError);
}

TEST_CASE("answers parse with or without brackets and ignore prose") {
  const ParsedAnswer a = mirage::parse_answer_response(
      "Answer: [9, 9, 3]", Scenario::lt(), 3);
  CHECK(a.values == Vec{9, 9, 3});

  const ParsedAnswer b = mirage::parse_answer_response(
      "Answer: 9, 9, 3", Scenario::cg(), 3);
  CHECK(b.values == Vec{9, 9, 3});

  const ParsedAnswer c = mirage::parse_answer_response(
      "Answer: There are 9 chairs, 9 tables, 3 pens.", Scenario::rp("trade"),
      3);
  CHECK(c.values == Vec{9, 9, 3});

  const ParsedAnswer d = mirage::parse_answer_response(
      "Answer: [gd, gd, d]", Scenario::st(), 3);
  CHECK(d.strings == mirage::StrVec{"gd", "gd", "d"});

  const ParsedAnswer e = mirage::parse_answer_response(
      "Answer: [\"\", e]", Scenario::st(), 2);
  CHECK(e.strings == mirage::StrVec{"", "e"});

  CHECK_THROWS_AS(
      mirage::parse_answer_response("Answer: [9, 9]", Scenario::lt(), 3),
      mirage::ArityError);
  // A string answer must be concrete, not reference input components.
  CHECK_THROWS_AS(
      mirage::parse_answer_response("Answer: [A, b]", Scenario::st(), 2),
      mirage::ParseError);
  CHECK_THROWS_AS(
      mirage::parse_answer_response("no stanza", Scenario::lt(), 3),
      mirage::FormatError);
}

TEST_CASE("probe answers extract one integer") {
  CHECK(mirage::parse_probe_answer("Answer: 68") == 68);
  CHECK(mirage::parse_probe_answer("Answer: -3") == -3);
  CHECK(mirage::parse_probe_answer("Thinking... Answer: 17 maybe") == 17);
  CHECK_THROWS_AS(mirage::parse_probe_answer("68"), mirage::FormatError);
  CHECK_THROWS_AS(mirage::parse_probe_answer("Answer: sixty-eight"),
                  mirage::ParseError);
}

TEST_CASE("rule judging is semantic by default") {
  const MetaRule truth = MetaRule::add(3, {1, 2}, {0, 1});

  // Reordered terms still canonicalize to the same linear form.
  const ParsedRule same = mirage::parse_rule_response(
      "Rule: [A, B, C] -> [C+B, C+B, C]", Scenario::lt(), 3);
  CHECK(mirage::judge_ri(same, truth).verdict == Verdict::Correct);

  const ParsedRule wrong = mirage::parse_rule_response(
      "Rule: [A, B, C] -> [B+C, B+C, A]", Scenario::lt(), 3);
  const Judgment j = mirage::judge_ri(wrong, truth);
  CHECK(j.verdict == Verdict::Incorrect);
  REQUIRE(j.counterexample.has_value());
  CHECK(wrong.apply(*j.counterexample) != truth.apply(*j.counterexample));
  CHECK(j.reason.find("differs at input") != std::string::npos);

  const ParsedRule narrower = mirage::parse_rule_response(
      "Rule: [A, B] -> [B, A]", Scenario::lt(), 2);
  CHECK_THROWS_AS(mirage::judge_ri(narrower, truth),
                  mirage::DimensionMismatch);
}

TEST_CASE("strict text matching is a policy toggle") {
  // Slot 1 below evaluates to A on every input, but through a nonlinear
  // form that survives only as raw text.
  const MetaRule truth = MetaRule::swap(2, {0}, {1});
  const std::string response =
      "Rule:\n"
      "def f(A, B):\n"
      "    A, B = B, (A*(B+1))-(A*B)\n"
      "    return A, B";
  const ParsedRule r =
      mirage::parse_rule_response(response, Scenario::cg(), 2);

  CHECK(mirage::judge_ri(r, truth).verdict == Verdict::Correct);

  mirage::JudgePolicy strict;
  strict.strict_text_match = true;
  const Judgment j = mirage::judge_ri(r, truth, strict);
  CHECK(j.verdict == Verdict::Incorrect);
  CHECK(j.reason.find("canonical text") != std::string::npos);
}

TEST_CASE("string rules are judged in the string interpretation") {
  // On digits a unit map equals a copy, but the string forms differ: the map
  // appends its offset letter.
  const MetaRule truth = MetaRule::copy(2, 0, {1});
  const ParsedRule copy_text = mirage::parse_rule_response(
      "Rule: AB -> [A, A]", Scenario::st(), 2);
  CHECK(mirage::judge_ri(copy_text, truth).verdict == Verdict::Correct);

  const ParsedRule appended = mirage::parse_rule_response(
      "Rule: AB -> [A, Aa]", Scenario::st(), 2);
  const Judgment j = mirage::judge_ri(appended, truth);
  CHECK(j.verdict == Verdict::Incorrect);
  CHECK(j.counterexample_string.has_value());
}

TEST_CASE("answer judging is an exact componentwise match") {
  const MetaRule truth = MetaRule::add(3, {1, 2}, {0, 1});
  ParsedAnswer a;
  a.values = {9, 9, 3};
  CHECK(mirage::judge_ei(a, truth, {2, 6, 3}).verdict == Verdict::Correct);
  a.values = {9, 9, 4};
  const Judgment j = mirage::judge_ei(a, truth, {2, 6, 3});
  CHECK(j.verdict == Verdict::Incorrect);
  CHECK(j.reason.find("does not match") != std::string::npos);

  ParsedAnswer s;
  s.string_mode = true;
  s.strings = {"gd", "gd", "d"};
  CHECK(mirage::judge_ei(s, truth, {2, 6, 3}).verdict == Verdict::Correct);
}

TEST_CASE("grading a full response folds parse failures into the verdict") {
  const RenderedQuestion ri = question(TaskKind::RuleInduction, Scenario::lt());
  CHECK(mirage::grade_response("Rule: [A, B, C] -> [B+C, B+C, C]", ri).verdict ==
        Verdict::Correct);
  CHECK(mirage::grade_response("Rule: [A, B, C] -> [A, B, C+1]", ri).verdict ==
        Verdict::Incorrect);

  const Judgment unparseable = mirage::grade_response("I cannot tell.", ri);
  CHECK(unparseable.verdict == Verdict::Unparseable);
  CHECK(unparseable.reason == "no \"Rule:\" stanza in response");

  const RenderedQuestion ei =
      question(TaskKind::ExampleInference, Scenario::lt());
  CHECK(mirage::grade_response("Answer: [9, 9, 3]", ei).verdict ==
        Verdict::Correct);
  CHECK(mirage::grade_response("Answer: [9, 9]", ei).verdict ==
        Verdict::Unparseable);

  const RenderedQuestion st_ri = question(TaskKind::RuleInduction,
                                          Scenario::st());
  CHECK(mirage::grade_response("Rule: ABC -> [Az, BC, C]", st_ri).verdict ==
        Verdict::Unparseable);
}

TEST_CASE("verdict names round-trip") {
  for (Verdict v : {Verdict::Correct, Verdict::Incorrect,
                    Verdict::Unparseable}) {
    CHECK(mirage::verdict_from_name(mirage::verdict_name(v)) == v);
  }
  CHECK_THROWS_AS(mirage::verdict_from_name("maybe"), mirage::SchemaError);
}

TEST_CASE("the parser is total over arbitrary byte strings") {
  const RenderedQuestion questions[] = {
      question(TaskKind::RuleInduction, Scenario::lt()),
      question(TaskKind::RuleInduction, Scenario::rp("trade")),
      question(TaskKind::RuleInduction, Scenario::cg()),
      question(TaskKind::RuleInduction, Scenario::st()),
      question(TaskKind::ExampleInference, Scenario::lt()),
      question(TaskKind::ExampleInference, Scenario::st()),
  };
  const std::string seeds[] = {
      "Rule: [A, B, C] -> [B+C, B+C, C]",
      "Answer: [9, 9, 3]",
      "Rule: ABC -> [BC, BC, C]",
      "Rule:\ndef f(A, B, C):\n    A, B, C = B+C, B+C, C\n    return A, B, C",
      "Rule: If there are A chairs, B tables, C pens. After the trade, "
      "there are B+C chairs, B+C tables, C pens.",
  };
  Rng rng(0xf022);

  auto grade_all = [&](const std::string& text) {
    for (const RenderedQuestion& q : questions) {
      const Judgment j = mirage::grade_response(text, q);
      CHECK((j.verdict == Verdict::Correct || j.verdict == Verdict::Incorrect ||
             j.verdict == Verdict::Unparseable));
    }
  };

  // Random byte soup.
  for (int i = 0; i < 400; ++i) {
    std::string text;
    const std::size_t len = rng.next_below(256);
    for (std::size_t k = 0; k < len; ++k) {
      text.push_back(static_cast<char>(rng.next_below(256)));
    }
    grade_all(text);
  }

  // Mutations of well-formed responses: splices, deletions, duplications.
  for (int i = 0; i < 400; ++i) {
    std::string text(seeds[rng.next_below(std::size(seeds))]);
    const int edits = 1 + static_cast<int>(rng.next_below(4));
    for (int e = 0; e < edits; ++e) {
      const std::size_t at = rng.next_below(text.size() + 1);
      switch (rng.next_below(3)) {
        case 0:
          text.insert(at, 1, static_cast<char>(rng.next_below(256)));
          break;
        case 1:
          if (!text.empty()) text.erase(at % text.size(), 1);
          break;
        default:
          text.insert(at, text.substr(text.size() / 2));
          break;
      }
    }
    grade_all(text);
  }

  // A few oversized responses, up to 64 KiB.
  for (int i = 0; i < 3; ++i) {
    std::string text;
    text.reserve(64 * 1024);
    while (text.size() < 64 * 1024 - 64) {
      text += seeds[rng.next_below(std::size(seeds))];
      text.push_back(static_cast<char>(rng.next_below(128)));
    }
    grade_all(text);
  }
}

// Prompt rendering: golden prompts for all four scenarios, canonical answer
// text, fact lines, few-shot exemplars, scaffolds, probes, and transfer
// questions.

#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>

#include "mirage/render.hpp"

using mirage::FactSet;
using mirage::MetaRule;
using mirage::RenderedQuestion;
using mirage::Rng;
using mirage::Scenario;
using mirage::TaskKind;
using mirage::Vec;

namespace {

// Shared fixture: sum of the last two components broadcast to the first two.
FactSet sample_facts() {
  FactSet fs;
  fs.rule = MetaRule::add(3, {1, 2}, {0, 1});
  for (const Vec& x : {Vec{3, 4, 7}, Vec{1, 0, 2}, Vec{5, 2, 1}}) {
    fs.facts.push_back({x, fs.rule.apply(x)});
  }
  return fs;
}

const Vec kTestInput = {2, 6, 3};

std::string prompt_of(const FactSet& fs, TaskKind task, const Scenario& sc,
                      std::optional<Vec> test_input = std::nullopt) {
  Rng rng(1);
  return mirage::render_question(fs, task, sc, test_input, 0, rng).prompt;
}

std::size_t count_occurrences(const std::string& haystack,
                              const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("list-transformation prompts are rendered verbatim") {
  const FactSet fs = sample_facts();

  CHECK(prompt_of(fs, TaskKind::RuleInduction, Scenario::lt()) ==
        R"(Please summarize the rules of the list transformation based on the given facts.
Your reply should strictly follow the following format:
Rule: [A, B, C] -> [<<expression>>, <<expression>>, <<expression>>]
Fact 1: Input: [3, 4, 7]    Output: [11, 11, 7]
Fact 2: Input: [1, 0, 2]    Output: [2, 2, 2]
Fact 3: Input: [5, 2, 1]    Output: [3, 3, 1]
Please generate the rule of list transformation based on the former facts.)");

  CHECK(prompt_of(fs, TaskKind::ExampleInference, Scenario::lt(), kTestInput) ==
        R"(Please answer the question based on rules of the list transformation in the given facts.
Your reply should strictly follow the following format:
Answer: [<<expression>>, <<expression>>, <<expression>>]
Fact 1: Input: [3, 4, 7]    Output: [11, 11, 7]
Fact 2: Input: [1, 0, 2]    Output: [2, 2, 2]
Fact 3: Input: [5, 2, 1]    Output: [3, 3, 1]
Question: Input: [2, 6, 3])");
}

TEST_CASE("canonical answers per scenario") {
  const FactSet fs = sample_facts();

  CHECK(mirage::canonical_rule_answer(fs.rule, Scenario::lt()) ==
        "Rule: [A, B, C] -> [B+C, B+C, C]");
  CHECK(mirage::canonical_ei_answer(fs.rule, kTestInput, Scenario::lt()) ==
        "Answer: [9, 9, 3]");

  CHECK(mirage::canonical_rule_answer(fs.rule, Scenario::rp("trade")) ==
        "Rule: If there are A chairs, B tables, C pens. After the trade, "
        "there are B+C chairs, B+C tables, C pens.");
  CHECK(mirage::canonical_ei_answer(fs.rule, kTestInput, Scenario::rp("trade")) ==
        "Answer: There are 9 chairs, 9 tables, 3 pens.");

  CHECK(mirage::canonical_rule_answer(fs.rule, Scenario::cg()) ==
        R"(Rule:
def f(A, B, C):
    A, B, C = B+C, B+C, C
    return A, B, C)");
  CHECK(mirage::canonical_ei_answer(fs.rule, kTestInput, Scenario::cg()) ==
        "Answer: 9, 9, 3");

  CHECK(mirage::canonical_rule_answer(fs.rule, Scenario::st()) ==
        "Rule: ABC -> [BC, BC, C]");
  CHECK(mirage::canonical_ei_answer(fs.rule, kTestInput, Scenario::st()) ==
        "Answer: [gd, gd, d]");
}

TEST_CASE("story prompts narrate the facts") {
  const FactSet fs = sample_facts();

  CHECK(prompt_of(fs, TaskKind::RuleInduction, Scenario::rp("trade")) ==
        R"(Please summarize the rules of the trade based on the given facts.
Your reply should strictly follow the following format:
Rule: If there are A chairs, B tables, C pens. After the trade, there are <<expression>> chairs, <<expression>> tables, <<expression>> pens.
Fact 1: Tom went to the market to trade items based on the rule. He originally had 3 chairs, 4 tables, 7 pens. After the trade, he had 11 chairs, 11 tables, 7 pens.
Fact 2: Tom went to the market to trade items based on the rule. He originally had 1 chairs, 0 tables, 2 pens. After the trade, he had 2 chairs, 2 tables, 2 pens.
Fact 3: Tom went to the market to trade items based on the rule. He originally had 5 chairs, 2 tables, 1 pens. After the trade, he had 3 chairs, 3 tables, 1 pens.
Please generate the rule of the trade based on the former facts.)");

  const std::string ei =
      prompt_of(fs, TaskKind::ExampleInference, Scenario::rp("trade"),
                kTestInput);
  CHECK(ei.find("Question: Tom went to the market to trade items based on "
                "the rule. He originally had 2 chairs, 6 tables, 3 pens. "
                "After the trade, how many chairs, tables, pens does he "
                "have?") != std::string::npos);
  CHECK(ei.find("Answer: There are <<expression>> chairs, <<expression>> "
                "tables, <<expression>> pens.") != std::string::npos);
}

TEST_CASE("every story template renders and differs in vocabulary") {
  const FactSet fs = sample_facts();
  std::set<std::string> prompts;
  for (const mirage::RpTemplate& t : mirage::rp_template_library()) {
    const std::string p =
        prompt_of(fs, TaskKind::RuleInduction, Scenario::rp(t.name));
    CHECK(p.find(t.objects[0]) != std::string::npos);
    CHECK(prompts.insert(p).second);
  }
  CHECK(prompts.size() == 5);
}

TEST_CASE("code prompts wrap the rule in a function skeleton") {
  const FactSet fs = sample_facts();
  const std::string p = prompt_of(fs, TaskKind::RuleInduction, Scenario::cg());
  CHECK(p.find("Please summarize the rules of the python function based on "
               "the given facts.") == 0);
  CHECK(p.find(R"(Rule:
def f(A, B, C):
    A, B, C = <<expression>>, <<expression>>, <<expression>>
    return A, B, C)") != std::string::npos);
  CHECK(p.find("Fact 1: Input: [3, 4, 7]    Output: [11, 11, 7]") !=
        std::string::npos);
}

TEST_CASE("string prompts render fact vectors as letters") {
  const FactSet fs = sample_facts();
  CHECK(prompt_of(fs, TaskKind::RuleInduction, Scenario::st()) ==
        R"(Please summarize the rules of the string transformation based on the given facts.
Your reply should strictly follow the following format:
Rule: ABC -> [<<expression>>, <<expression>>, <<expression>>]
Fact 1: Input: [d, e, h]    Output: [eh, eh, h]
Fact 2: Input: [b, a, c]    Output: [ac, ac, c]
Fact 3: Input: [f, c, b]    Output: [cb, cb, b]
Please generate the rule of string transformation based on the former facts.)");

  const std::string ei =
      prompt_of(fs, TaskKind::ExampleInference, Scenario::st(), kTestInput);
  CHECK(ei.find("Question: Input: [c, g, d]") != std::string::npos);
}

TEST_CASE("fact lines use a four-space gutter and one-based numbering") {
  const FactSet fs = sample_facts();
  CHECK(mirage::render_fact_line(1, fs.rule, fs.facts[0], Scenario::lt(),
                                 false) ==
        "Fact 1: Input: [3, 4, 7]    Output: [11, 11, 7]");
  CHECK(mirage::render_fact_line(3, fs.rule, fs.facts[2], Scenario::lt(),
                                 false) ==
        "Fact 3: Input: [5, 2, 1]    Output: [3, 3, 1]");
}

TEST_CASE("perturbed string facts show the corrupted digits as letters") {
  FactSet fs;
  fs.rule = MetaRule::copy(2, 0, {1});
  fs.facts = {{{3, 4}, {3, 9}}};  // corrupted: the rule would give [3, 3]
  fs.perturbed_index = 0;
  CHECK(mirage::render_fact_line(1, fs.rule, fs.facts[0], Scenario::st(),
                                 true) ==
        "Fact 1: Input: [d, e]    Output: [d, j]");
  // Without the perturbed flag the rule's own string image is shown.
  CHECK(mirage::render_fact_line(1, fs.rule, fs.facts[0], Scenario::st(),
                                 false) ==
        "Fact 1: Input: [d, e]    Output: [d, d]");
}

TEST_CASE("format markers appear once per slot") {
  const FactSet fs = sample_facts();
  for (const Scenario& sc : {Scenario::lt(), Scenario::rp("magic"),
                             Scenario::cg(), Scenario::st()}) {
    CHECK(count_occurrences(prompt_of(fs, TaskKind::RuleInduction, sc),
                            "<<expression>>") == 3);
    CHECK(count_occurrences(
              prompt_of(fs, TaskKind::ExampleInference, sc, kTestInput),
              "<<expression>>") == 3);
  }
}

TEST_CASE("chain-of-thought appends the scaffold line") {
  const FactSet fs = sample_facts();
  Rng rng(1);
  const RenderedQuestion q = mirage::render_question(
      fs, TaskKind::RuleInduction, Scenario::lt(), std::nullopt, 0, rng,
      mirage::PromptStyle::ChainOfThought);
  const std::string direct = prompt_of(fs, TaskKind::RuleInduction,
                                       Scenario::lt());
  CHECK(q.prompt == direct + "\n" + mirage::kChainOfThoughtScaffold);
}

TEST_CASE("few-shot exemplars precede the question and are distinct") {
  const FactSet fs = sample_facts();
  Rng rng(2);
  const RenderedQuestion q = mirage::render_question(
      fs, TaskKind::RuleInduction, Scenario::lt(), std::nullopt, 2, rng);
  CHECK(q.shots == 2);
  CHECK(q.prompt.rfind("Example 1:\n", 0) == 0);
  CHECK(q.prompt.find("Example 2:\n") != std::string::npos);
  // Each exemplar block ends with its own worked answer.
  CHECK(count_occurrences(q.prompt, "Rule: [A, B, C] -> [") >= 5);
  // The question itself comes last, unanswered.
  const std::string tail =
      "Please generate the rule of list transformation based on the former "
      "facts.";
  CHECK(q.prompt.substr(q.prompt.size() - tail.size()) == tail);
  // Exemplar rules are structurally different from the asked rule, so no
  // exemplar leaks the answer.
  CHECK(q.prompt.find(mirage::canonical_rule_answer(fs.rule, Scenario::lt()) +
                      "\n") == std::string::npos);
  // Determinism: the same seed renders the same exemplars.
  Rng rng2(2);
  CHECK(mirage::render_question(fs, TaskKind::RuleInduction, Scenario::lt(),
                                std::nullopt, 2, rng2)
            .prompt == q.prompt);
}

TEST_CASE("rendered metadata describes the question") {
  const FactSet fs = sample_facts();
  Rng rng(1);
  const RenderedQuestion q = mirage::render_question(
      fs, TaskKind::ExampleInference, Scenario::st(), kTestInput, 0, rng);
  CHECK(q.task == TaskKind::ExampleInference);
  CHECK(q.scenario.label() == "ST");
  CHECK(q.dim == 3);
  CHECK(q.n_facts == 3);
  REQUIRE(q.test_input.has_value());
  CHECK(*q.test_input == kTestInput);
  CHECK(q.expected_text == "Answer: [gd, gd, d]");
  CHECK(q.rule == fs.rule);
}

TEST_CASE("example inference requires a test input") {
  const FactSet fs = sample_facts();
  Rng rng(1);
  CHECK_THROWS_AS(
      mirage::render_question(fs, TaskKind::ExampleInference, Scenario::lt(),
                              std::nullopt, 0, rng),
      mirage::ConfigError);
}

TEST_CASE("scenario capacity limits") {
  // A story template runs out of object nouns past eight slots.
  FactSet wide;
  wide.rule = MetaRule::pad(9, {0}, 1);
  Rng gen(1);
  wide = mirage::generate_fact_set(wide.rule, 3, {}, gen);
  Rng rng(1);
  CHECK_THROWS_AS(
      mirage::render_question(wide, TaskKind::RuleInduction,
                              Scenario::rp("trade"), std::nullopt, 0, rng),
      mirage::TemplateMismatch);
  CHECK_NOTHROW(mirage::render_question(wide, TaskKind::RuleInduction,
                                        Scenario::lt(), std::nullopt, 0, rng));
}

TEST_CASE("scenario labels round-trip") {
  CHECK(mirage::scenario_from_label("LT").label() == "LT");
  CHECK(mirage::scenario_from_label("CG").label() == "CG");
  CHECK(mirage::scenario_from_label("ST").label() == "ST");
  CHECK(mirage::scenario_from_label("RP:magic").label() == "RP:magic");
  CHECK(mirage::scenario_from_label("RP").label() == "RP:trade");
  CHECK_THROWS_AS(mirage::scenario_from_label("XX"),
                  mirage::TemplateMismatch);
  CHECK_THROWS_AS(Scenario::rp("nonexistent"), mirage::ConfigError);
  CHECK_THROWS_AS(mirage::task_kind_from_name(std::string("zz")),
                  mirage::SchemaError);
}

TEST_CASE("transfer questions show facts in one scenario, ask in another") {
  const FactSet fs = sample_facts();
  const RenderedQuestion q = mirage::render_cross_scenario(
      Scenario::lt(), Scenario::cg(), fs, kTestInput);
  CHECK(q.prompt ==
        R"(Please answer the question based on rules of the python function in the given facts.
Your reply should strictly follow the following format:
Answer: <<expression>>, <<expression>>, <<expression>>
Fact 1: Input: [3, 4, 7]    Output: [11, 11, 7]
Fact 2: Input: [1, 0, 2]    Output: [2, 2, 2]
Fact 3: Input: [5, 2, 1]    Output: [3, 3, 1]
Question: Input: [2, 6, 3])");
  CHECK(q.expected_text == "Answer: 9, 9, 3");

  // The string scenario has its own alphabet and cannot mix.
  CHECK_THROWS_AS(mirage::render_cross_scenario(Scenario::st(), Scenario::lt(),
                                                fs, kTestInput),
                  mirage::UnsupportedTransfer);
  CHECK_THROWS_AS(mirage::render_cross_scenario(Scenario::lt(), Scenario::st(),
                                                fs, kTestInput),
                  mirage::UnsupportedTransfer);
}

TEST_CASE("arithmetic probes ask a single operation question") {
  Rng rng(3);
  const mirage::ArithmeticProbe map_probe =
      mirage::render_arithmetic_probe(mirage::OpKind::Map, rng);
  CHECK(map_probe.prompt ==
        R"(Please answer the arithmetic question.
Your reply should strictly follow the following format:
Answer: <<integer>>
Question: What is 9 * 7 + 5?)");
  CHECK(map_probe.expected == 68);

  const mirage::ArithmeticProbe add_probe =
      mirage::render_arithmetic_probe(mirage::OpKind::Add, rng);
  CHECK(add_probe.prompt.find("Question: What is 1 + 8 + 9?") !=
        std::string::npos);
  CHECK(add_probe.expected == 18);

  // Only the two arithmetic operations have probes.
  CHECK_THROWS_AS(mirage::render_arithmetic_probe(mirage::OpKind::Swap, rng),
                  mirage::ConfigError);
}

TEST_CASE("refinement and critique wrappers carry prior context") {
  CHECK(mirage::render_refine_prompt("BASE_PROMPT", "Rule: [A, B] -> [B, A]",
                                     "Fact 2 disagrees.") ==
        R"(BASE_PROMPT

Your previous answer was:
Rule: [A, B] -> [B, A]

Feedback:
Fact 2 disagrees.

Please answer again, strictly following the required format.)");

  CHECK(mirage::render_critique_prompt("BASE_PROMPT",
                                       "Rule: [A, B] -> [B, A]") ==
        R"(BASE_PROMPT

Here is a candidate rule:
Rule: [A, B] -> [B, A]

Review whether this rule explains every fact above. Reply with a short critique of the rule, or the single word "correct" if it is right.)");
}

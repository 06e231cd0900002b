#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mirage/errors.hpp"
#include "mirage/fact.hpp"
#include "mirage/rng.hpp"
#include "mirage/rule.hpp"
#include "mirage/types.hpp"

namespace mirage {

enum class ScenarioKind {
  ListTransformation,
  RealWorldProblem,
  CodeGeneration,
  StringTransformation
};

inline const char* scenario_kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::ListTransformation: return "LT";
    case ScenarioKind::RealWorldProblem: return "RP";
    case ScenarioKind::CodeGeneration: return "CG";
    case ScenarioKind::StringTransformation: return "ST";
  }
  throw Error("scenario_kind_name: unknown kind");
}

inline ScenarioKind scenario_kind_from_name(std::string_view name) {
  if (name == "LT") return ScenarioKind::ListTransformation;
  if (name == "RP") return ScenarioKind::RealWorldProblem;
  if (name == "CG") return ScenarioKind::CodeGeneration;
  if (name == "ST") return ScenarioKind::StringTransformation;
  throw ConfigError("unknown scenario: " + std::string(name));
}

// A real-world-problem story frame: a protagonist changes counted objects
// according to the hidden rule.
struct RpTemplate {
  std::string name;        // config key, e.g. "trade"
  std::string task_noun;   // "trade" in "rules of the trade"
  std::string intro;       // "Tom went to the market to trade items ..."
  std::string before;      // "He originally had"
  std::string after;       // "After the trade, he had"
  std::vector<std::string> objects;  // count nouns, one per slot
};

inline const std::vector<RpTemplate>& rp_template_library() {
  static const std::vector<RpTemplate> lib = {
      {"trade", "trade",
       "Tom went to the market to trade items based on the rule.",
       "He originally had", "After the trade, he had",
       {"chairs", "tables", "pens", "cups", "plates", "lamps", "clocks",
        "vases"}},
      {"diet", "diet adjustment",
       "Tom adjusted his weekly diet plan based on the rule.",
       "He originally ate", "After the adjustment, he ate",
       {"apples", "bananas", "oranges", "pears", "peaches", "plums", "melons",
        "grapes"}},
      {"magic", "magic trick",
       "Tom performed a magic trick on his cards based on the rule.",
       "He originally held", "After the trick, he held",
       {"spades", "hearts", "clubs", "diamonds", "jokers", "aces", "kings",
        "queens"}},
      {"invest", "investment adjustment",
       "Tom rebalanced his portfolio based on the rule.",
       "He originally owned", "After the rebalance, he owned",
       {"stocks", "bonds", "funds", "coins", "shares", "notes", "options",
        "futures"}},
      {"course", "course adjustment",
       "Tom changed his semester schedule based on the rule.",
       "He originally took", "After the change, he took",
       {"math classes", "art classes", "music classes", "history classes",
        "science classes", "gym classes", "coding classes",
        "drama classes"}}};
  return lib;
}

inline const RpTemplate& rp_template_by_name(std::string_view name) {
  for (const RpTemplate& t : rp_template_library()) {
    if (t.name == name) return t;
  }
  throw ConfigError("unknown story template: " + std::string(name));
}

struct Scenario {
  ScenarioKind kind = ScenarioKind::ListTransformation;
  std::optional<RpTemplate> story;  // set iff kind == RealWorldProblem

  static Scenario lt() { return {ScenarioKind::ListTransformation, {}}; }
  static Scenario rp(const RpTemplate& t) {
    return {ScenarioKind::RealWorldProblem, t};
  }
  static Scenario rp(std::string_view template_name) {
    return rp(rp_template_by_name(template_name));
  }
  static Scenario cg() { return {ScenarioKind::CodeGeneration, {}}; }
  static Scenario st() { return {ScenarioKind::StringTransformation, {}}; }

  const char* name() const { return scenario_kind_name(kind); }
  std::string label() const {
    std::string s = name();
    if (story) s += ":" + story->name;
    return s;
  }
};

// Inverse of Scenario::label(): "LT", "CG", "ST", or "RP:<template name>".
inline Scenario scenario_from_label(const std::string& label) {
  if (label == "LT") return Scenario::lt();
  if (label == "CG") return Scenario::cg();
  if (label == "ST") return Scenario::st();
  if (label.rfind("RP:", 0) == 0) return Scenario::rp(label.substr(3));
  if (label == "RP") return Scenario::rp("trade");
  throw TemplateMismatch("unknown scenario label: " + label);
}

enum class TaskKind { RuleInduction, ExampleInference };

inline const char* task_kind_name(TaskKind t) {
  return t == TaskKind::RuleInduction ? "RI" : "EI";
}

inline TaskKind task_kind_from_name(const std::string& name) {
  if (name == "RI") return TaskKind::RuleInduction;
  if (name == "EI") return TaskKind::ExampleInference;
  throw SchemaError("unknown task kind: " + name);
}

inline TaskKind task_kind_from_name(std::string_view name) {
  if (name == "RI") return TaskKind::RuleInduction;
  if (name == "EI") return TaskKind::ExampleInference;
  throw ConfigError("unknown task: " + std::string(name));
}

enum class PromptStyle { Direct, ChainOfThought };

inline constexpr const char* kChainOfThoughtScaffold =
    "Think step by step, then give your final answer in the required format "
    "on the last line.";

namespace detail {

inline void check_scenario_capacity(const Scenario& sc, int dim) {
  if (dim > kMaxDim) {
    throw TemplateMismatch("dimension " + std::to_string(dim) +
                           " exceeds the positional letter capacity of " +
                           std::to_string(kMaxDim));
  }
  if (sc.kind == ScenarioKind::RealWorldProblem) {
    if (!sc.story) throw ConfigError("RP scenario carries no story template");
    if (dim > static_cast<int>(sc.story->objects.size())) {
      throw TemplateMismatch(
          "dimension " + std::to_string(dim) + " exceeds the " +
          std::to_string(sc.story->objects.size()) + " object nouns of the \"" +
          sc.story->name + "\" template");
    }
  }
}

// Which source slot feeds each written slot, per operation shape. Returns
// the canonical expression text for one output slot of the rule.
inline std::string numeric_slot_expr(const MetaRule& f, int slot) {
  const std::vector<int>& d = f.source();
  const std::vector<int>& r = f.target();
  switch (f.kind()) {
    case OpKind::Add:
      for (int t : r) {
        if (t == slot) {
          std::string s;
          for (std::size_t i = 0; i < d.size(); ++i) {
            if (i) s += "+";
            s += var_letter(d[i]);
          }
          return s;
        }
      }
      break;
    case OpKind::Copy:
      for (int t : r) {
        if (t == slot) return var_letter(d[0]);
      }
      break;
    case OpKind::Map:
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] == slot) {
          std::string s;
          if (f.scale() != 1) s += std::to_string(f.scale()) + "*";
          s += var_letter(d[i]);
          if (f.offset() != 0) s += "+" + std::to_string(f.offset());
          return s;
        }
      }
      break;
    case OpKind::Pad:
      for (int t : r) {
        if (t == slot) return std::to_string(f.fill());
      }
      break;
    case OpKind::Swap:
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] == slot) return var_letter(d[i]);
        if (d[i] == slot) return var_letter(r[i]);
      }
      break;
  }
  return var_letter(slot);  // slot not written: passes through
}

// Canonical string-interpretation expression for one output slot:
// uppercase letters are input components, lowercase letters are literal
// characters, "" is the empty string.
inline std::string string_slot_expr(const MetaRule& f, int slot) {
  const std::vector<int>& d = f.source();
  const std::vector<int>& r = f.target();
  switch (f.kind()) {
    case OpKind::Add:
      for (int t : r) {
        if (t == slot) {
          std::string s;
          for (int src : d) s += var_letter(src);
          return s;
        }
      }
      break;
    case OpKind::Copy:
      for (int t : r) {
        if (t == slot) return var_letter(d[0]);
      }
      break;
    case OpKind::Map:
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] == slot) {
          std::string s;
          for (std::int64_t k = 0; k < f.scale(); ++k) s += var_letter(d[i]);
          s += digit_to_letter(f.offset());
          return s;
        }
      }
      break;
    case OpKind::Pad:
      for (int t : r) {
        if (t == slot) {
          return f.fill() == 0 ? std::string("\"\"")
                               : std::string(1, digit_to_letter(f.fill()));
        }
      }
      break;
    case OpKind::Swap:
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] == slot) return var_letter(d[i]);
        if (d[i] == slot) return var_letter(r[i]);
      }
      break;
  }
  return var_letter(slot);
}

inline std::string join(const std::vector<std::string>& parts,
                        const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

// "3 chairs, 4 tables, 7 pens" from counts (or expressions) and nouns.
inline std::string counted_list(const std::vector<std::string>& values,
                                const RpTemplate& story) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < values.size(); ++i) {
    parts.push_back(values[i] + " " + story.objects[i]);
  }
  return join(parts, ", ");
}

inline std::vector<std::string> vec_strings(const Vec& v) {
  std::vector<std::string> out;
  for (std::int64_t c : v) out.push_back(std::to_string(c));
  return out;
}

// The string-interpretation output of one fact. Perturbed slots (numeric
// output differing from the rule's own output) are rendered as the letter of
// the corrupted digit, so the displayed fact contradicts the rule exactly
// where the numeric fact does.
inline StrVec string_fact_output(const MetaRule& rule, const Fact& fact,
                                 bool perturbed) {
  const StrVec x = digits_to_letters(fact.input);
  StrVec y = rule.apply_string(x);
  if (perturbed) {
    const Vec expected = rule.apply(fact.input);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fact.output[i] != expected[i]) {
        y[i] = std::string(1, digit_to_letter(fact.output[i]));
      }
    }
  }
  return y;
}

}  // namespace detail

// What the scenario calls the hidden transformation, used in instruction
// sentences ("rules of the list transformation").
inline std::string scenario_noun(const Scenario& sc) {
  switch (sc.kind) {
    case ScenarioKind::ListTransformation: return "list transformation";
    case ScenarioKind::RealWorldProblem: return sc.story->task_noun;
    case ScenarioKind::CodeGeneration: return "python function";
    case ScenarioKind::StringTransformation: return "string transformation";
  }
  throw Error("scenario_noun: unknown kind");
}

// One rendered fact line, in the scenario's surface syntax. Also used when
// refinement loops feed error examples back to a proposer.
inline std::string render_fact_line(int index, const MetaRule& rule,
                                    const Fact& fact, const Scenario& sc,
                                    bool perturbed = false) {
  const std::string label = "Fact " + std::to_string(index) + ": ";
  switch (sc.kind) {
    case ScenarioKind::ListTransformation:
    case ScenarioKind::CodeGeneration:
      return label + "Input: " + format_vec(fact.input) + "    Output: " +
             format_vec(fact.output);
    case ScenarioKind::StringTransformation: {
      const StrVec x = digits_to_letters(fact.input);
      const StrVec y = detail::string_fact_output(rule, fact, perturbed);
      return label + "Input: " + format_str_vec(x) + "    Output: " +
             format_str_vec(y);
    }
    case ScenarioKind::RealWorldProblem: {
      const RpTemplate& story = *sc.story;
      return label + story.intro + " " + story.before + " " +
             detail::counted_list(detail::vec_strings(fact.input), story) +
             ". " + story.after + " " +
             detail::counted_list(detail::vec_strings(fact.output), story) +
             ".";
    }
  }
  throw Error("render_fact_line: unknown scenario");
}

// The canonical rule-answer text for a scenario (what a perfect responder
// says on a rule-induction task).
inline std::string canonical_rule_answer(const MetaRule& f,
                                         const Scenario& sc) {
  detail::check_scenario_capacity(sc, f.dim());
  std::vector<std::string> exprs;
  for (int i = 0; i < f.dim(); ++i) {
    exprs.push_back(sc.kind == ScenarioKind::StringTransformation
                        ? detail::string_slot_expr(f, i)
                        : detail::numeric_slot_expr(f, i));
  }
  std::vector<std::string> letters;
  for (int i = 0; i < f.dim(); ++i) letters.push_back(var_letter(i));

  switch (sc.kind) {
    case ScenarioKind::ListTransformation:
      return "Rule: [" + detail::join(letters, ", ") + "] -> [" +
             detail::join(exprs, ", ") + "]";
    case ScenarioKind::StringTransformation:
      return "Rule: " + var_letters(f.dim()) + " -> [" +
             detail::join(exprs, ", ") + "]";
    case ScenarioKind::CodeGeneration: {
      const std::string args = detail::join(letters, ", ");
      return "Rule:\ndef f(" + args + "):\n    " + args + " = " +
             detail::join(exprs, ", ") + "\n    return " + args;
    }
    case ScenarioKind::RealWorldProblem: {
      const RpTemplate& story = *sc.story;
      return "Rule: If there are " + detail::counted_list(letters, story) +
             ". After the " + story.task_noun + ", there are " +
             detail::counted_list(exprs, story) + ".";
    }
  }
  throw Error("canonical_rule_answer: unknown scenario");
}

// The canonical answer text for an example-inference question at test_input.
inline std::string canonical_ei_answer(const MetaRule& f, const Vec& test_input,
                                       const Scenario& sc) {
  detail::check_scenario_capacity(sc, f.dim());
  switch (sc.kind) {
    case ScenarioKind::ListTransformation:
      return "Answer: " + format_vec(f.apply(test_input));
    case ScenarioKind::CodeGeneration: {
      const std::vector<std::string> vals =
          detail::vec_strings(f.apply(test_input));
      return "Answer: " + detail::join(vals, ", ");
    }
    case ScenarioKind::StringTransformation:
      return "Answer: " +
             format_str_vec(f.apply_string(digits_to_letters(test_input)));
    case ScenarioKind::RealWorldProblem: {
      const RpTemplate& story = *sc.story;
      return "Answer: There are " +
             detail::counted_list(detail::vec_strings(f.apply(test_input)),
                                  story) +
             ".";
    }
  }
  throw Error("canonical_ei_answer: unknown scenario");
}

namespace detail {

// The reply-format stanza a prompt instructs the model to follow.
inline std::string format_stanza(const Scenario& sc, TaskKind task, int dim) {
  std::vector<std::string> slots(dim, "<<expression>>");
  std::vector<std::string> letters;
  for (int i = 0; i < dim; ++i) letters.push_back(var_letter(i));
  const std::string exprs = join(slots, ", ");

  if (task == TaskKind::RuleInduction) {
    switch (sc.kind) {
      case ScenarioKind::ListTransformation:
        return "Rule: [" + join(letters, ", ") + "] -> [" + exprs + "]";
      case ScenarioKind::StringTransformation:
        return "Rule: " + var_letters(dim) + " -> [" + exprs + "]";
      case ScenarioKind::CodeGeneration: {
        const std::string args = join(letters, ", ");
        return "Rule:\ndef f(" + args + "):\n    " + args + " = " + exprs +
               "\n    return " + args;
      }
      case ScenarioKind::RealWorldProblem: {
        const RpTemplate& story = *sc.story;
        return "Rule: If there are " + counted_list(letters, story) +
               ". After the " + story.task_noun + ", there are " +
               counted_list(slots, story) + ".";
      }
    }
  } else {
    switch (sc.kind) {
      case ScenarioKind::ListTransformation:
      case ScenarioKind::StringTransformation:
        return "Answer: [" + exprs + "]";
      case ScenarioKind::CodeGeneration:
        return "Answer: " + exprs;
      case ScenarioKind::RealWorldProblem:
        return "Answer: There are " + counted_list(slots, *sc.story) + ".";
    }
  }
  throw Error("format_stanza: unknown scenario");
}

inline std::string question_line(const Scenario& sc, const Vec& test_input) {
  switch (sc.kind) {
    case ScenarioKind::ListTransformation:
    case ScenarioKind::CodeGeneration:
      return "Question: Input: " + format_vec(test_input);
    case ScenarioKind::StringTransformation:
      return "Question: Input: " +
             format_str_vec(digits_to_letters(test_input));
    case ScenarioKind::RealWorldProblem: {
      const RpTemplate& story = *sc.story;
      std::vector<std::string> nouns(story.objects.begin(),
                                     story.objects.begin() + test_input.size());
      return "Question: " + story.intro + " " + story.before + " " +
             counted_list(vec_strings(test_input), story) + ". After the " +
             story.task_noun + ", how many " + join(nouns, ", ") +
             " does he have?";
    }
  }
  throw Error("question_line: unknown scenario");
}

}  // namespace detail

// A fully rendered question: the prompt text plus everything needed to grade
// a response to it.
struct RenderedQuestion {
  std::string prompt;
  Scenario scenario;
  TaskKind task = TaskKind::RuleInduction;
  MetaRule rule;
  std::optional<Vec> test_input;  // set for example-inference questions
  std::string expected_text;      // canonical answer text
  int shots = 0;
  PromptStyle style = PromptStyle::Direct;
  int dim = 0;
  int n_facts = 0;
};

namespace detail {

// The instruction + format + facts + question body for one task, without
// few-shot examples or scaffold lines.
inline std::string prompt_body(const FactSet& fs, TaskKind task,
                               const Scenario& sc,
                               const std::optional<Vec>& test_input) {
  const int dim = fs.dim();
  const std::string noun = scenario_noun(sc);
  std::string head;
  if (task == TaskKind::RuleInduction) {
    head = "Please summarize the rules of the " + noun +
           " based on the given facts.";
  } else {
    head = "Please answer the question based on rules of the " + noun +
           " in the given facts.";
  }
  std::string s = head +
                  "\nYour reply should strictly follow the following format:\n" +
                  format_stanza(sc, task, dim) + "\n";
  for (std::size_t i = 0; i < fs.facts.size(); ++i) {
    const bool perturbed =
        fs.perturbed_index && *fs.perturbed_index == static_cast<int>(i);
    s += render_fact_line(static_cast<int>(i) + 1, fs.rule, fs.facts[i], sc,
                          perturbed) +
         "\n";
  }
  if (task == TaskKind::RuleInduction) {
    std::string of = noun;
    if (sc.kind == ScenarioKind::RealWorldProblem ||
        sc.kind == ScenarioKind::CodeGeneration) {
      of = "the " + noun;
    }
    s += "Please generate the rule of " + of + " based on the former facts.";
  } else {
    s += question_line(sc, *test_input);
  }
  return s;
}

}  // namespace detail

// Renders a task prompt. Example-inference questions require a test input.
// shots > 0 prepends that many worked examples under freshly sampled rules
// (structurally distinct from the question's rule), drawn from rng.
inline RenderedQuestion render_question(const FactSet& fs, TaskKind task,
                                        const Scenario& sc,
                                        std::optional<Vec> test_input,
                                        int shots, Rng& rng,
                                        PromptStyle style = PromptStyle::Direct) {
  detail::check_scenario_capacity(sc, fs.dim());
  if (task == TaskKind::ExampleInference) {
    if (!test_input) {
      throw ConfigError("example-inference questions need a test input");
    }
    if (static_cast<int>(test_input->size()) != fs.dim()) {
      throw DimensionMismatch("test input dimension does not match facts");
    }
    if (!is_digit_vector(*test_input)) {
      throw ConfigError("test input components must be digits 0..9");
    }
  }
  if (shots < 0) throw ConfigError("shots must be non-negative");

  std::string prompt;
  for (int e = 0; e < shots; ++e) {
    MetaRule exemplar_rule = fs.rule;
    for (int attempt = 0; attempt < 64 && exemplar_rule == fs.rule; ++attempt) {
      exemplar_rule = sample_rule(fs.dim(), rng);
    }
    if (exemplar_rule == fs.rule) {
      throw GenerationExhausted("could not sample a distinct example rule");
    }
    const FactSet efs = generate_fact_set(
        exemplar_rule, static_cast<int>(fs.size()), GenerationConstraint{}, rng);
    std::optional<Vec> etest;
    std::string eanswer;
    if (task == TaskKind::ExampleInference) {
      for (int attempt = 0; attempt < 10000; ++attempt) {
        Vec candidate = sample_input(fs.dim(), rng);
        const auto used = [&](const Fact& f) { return f.input == candidate; };
        if (std::find_if(efs.facts.begin(), efs.facts.end(), used) ==
            efs.facts.end()) {
          etest = std::move(candidate);
          break;
        }
      }
      if (!etest) {
        throw GenerationExhausted("could not sample an unseen example input");
      }
      eanswer = canonical_ei_answer(exemplar_rule, *etest, sc);
    } else {
      eanswer = canonical_rule_answer(exemplar_rule, sc);
    }
    prompt += "Example " + std::to_string(e + 1) + ":\n" +
              detail::prompt_body(efs, task, sc, etest) + "\n" + eanswer +
              "\n\n";
  }

  prompt += detail::prompt_body(fs, task, sc, test_input);
  if (style == PromptStyle::ChainOfThought) {
    prompt += std::string("\n") + kChainOfThoughtScaffold;
  }

  RenderedQuestion q;
  q.prompt = std::move(prompt);
  q.scenario = sc;
  q.task = task;
  q.rule = fs.rule;
  q.test_input = std::move(test_input);
  q.expected_text = task == TaskKind::RuleInduction
                        ? canonical_rule_answer(fs.rule, sc)
                        : canonical_ei_answer(fs.rule, *q.test_input, sc);
  q.shots = shots;
  q.style = style;
  q.dim = fs.dim();
  q.n_facts = static_cast<int>(fs.size());
  return q;
}

// Example-inference question whose facts are shown in one scenario and whose
// question + answer format belong to another. The string scenario has its
// own alphabet and cannot host numeric facts (or vice versa).
inline RenderedQuestion render_cross_scenario(const Scenario& fact_side,
                                              const Scenario& question_side,
                                              const FactSet& fs,
                                              const Vec& test_input) {
  if (fact_side.kind == ScenarioKind::StringTransformation ||
      question_side.kind == ScenarioKind::StringTransformation) {
    throw UnsupportedTransfer(
        "string transformation does not mix with numeric scenarios");
  }
  detail::check_scenario_capacity(fact_side, fs.dim());
  detail::check_scenario_capacity(question_side, fs.dim());
  if (static_cast<int>(test_input.size()) != fs.dim()) {
    throw DimensionMismatch("test input dimension does not match facts");
  }

  const std::string noun = scenario_noun(question_side);
  std::string s = "Please answer the question based on rules of the " + noun +
                  " in the given facts.";
  s += "\nYour reply should strictly follow the following format:\n" +
       detail::format_stanza(question_side, TaskKind::ExampleInference,
                             fs.dim()) +
       "\n";
  for (std::size_t i = 0; i < fs.facts.size(); ++i) {
    const bool perturbed =
        fs.perturbed_index && *fs.perturbed_index == static_cast<int>(i);
    s += render_fact_line(static_cast<int>(i) + 1, fs.rule, fs.facts[i],
                          fact_side, perturbed) +
         "\n";
  }
  s += detail::question_line(question_side, test_input);

  RenderedQuestion q;
  q.prompt = std::move(s);
  q.scenario = question_side;
  q.task = TaskKind::ExampleInference;
  q.rule = fs.rule;
  q.test_input = test_input;
  q.expected_text = canonical_ei_answer(fs.rule, test_input, question_side);
  q.dim = fs.dim();
  q.n_facts = static_cast<int>(fs.size());
  return q;
}

// A plain arithmetic question probing the atomic computations rules need:
// scaled affine evaluation (Map) or multi-operand addition (Add).
struct ArithmeticProbe {
  std::string prompt;
  std::int64_t expected = 0;
  OpKind kind = OpKind::Map;
};

inline ArithmeticProbe render_arithmetic_probe(OpKind kind, Rng& rng) {
  ArithmeticProbe p;
  p.kind = kind;
  std::string question;
  if (kind == OpKind::Map) {
    const std::int64_t k = rng.next_int(1, 9);
    const std::int64_t x = rng.next_int(0, 9);
    const std::int64_t b = rng.next_int(0, 9);
    question = std::to_string(k) + " * " + std::to_string(x) + " + " +
               std::to_string(b);
    p.expected = k * x + b;
  } else if (kind == OpKind::Add) {
    const int m = static_cast<int>(rng.next_int(2, 5));
    std::int64_t sum = 0;
    for (int i = 0; i < m; ++i) {
      const std::int64_t v = rng.next_int(0, 9);
      sum += v;
      if (i) question += " + ";
      question += std::to_string(v);
    }
    p.expected = sum;
  } else {
    throw ConfigError("arithmetic probes cover the map and add operations");
  }
  p.prompt =
      "Please answer the arithmetic question.\n"
      "Your reply should strictly follow the following format:\n"
      "Answer: <<integer>>\n"
      "Question: What is " +
      question + "?";
  return p;
}

// Follow-up prompt fed to a proposer during refinement: the original task,
// the proposer's previous answer, and feedback text (fact-level error
// records for hypothesis refinement, the critique text for self-refinement).
inline std::string render_refine_prompt(const std::string& base_prompt,
                                        const std::string& previous_answer,
                                        const std::string& feedback) {
  return base_prompt + "\n\nYour previous answer was:\n" + previous_answer +
         "\n\nFeedback:\n" + feedback +
         "\n\nPlease answer again, strictly following the required format.";
}

// Prompt asking a model to critique its own rule (self-refinement feedback).
inline std::string render_critique_prompt(const std::string& base_prompt,
                                          const std::string& rule_text) {
  return base_prompt + "\n\nHere is a candidate rule:\n" + rule_text +
         "\n\nReview whether this rule explains every fact above. Reply with "
         "a short critique of the rule, or the single word \"correct\" if it "
         "is right.";
}

}  // namespace mirage

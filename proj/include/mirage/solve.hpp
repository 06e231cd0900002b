#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mirage/errors.hpp"
#include "mirage/fact.hpp"
#include "mirage/grade.hpp"
#include "mirage/metrics.hpp"
#include "mirage/render.hpp"
#include "mirage/rule.hpp"

namespace mirage {

// ---------------------------------------------------------------------------
// Scoring rules against fact sets
// ---------------------------------------------------------------------------

// Exact-match score of a rule over a fact set. RuleLike is anything with
// apply(Vec) -> Vec (a MetaRule or a numeric ParsedRule).
struct ScoreResult {
  int correct = 0;
  struct Mismatch {
    int fact_index;
    Vec actual;  // what the scored rule produced; expected is the fact output
  };
  std::vector<Mismatch> errors;
};

template <typename RuleLike>
ScoreResult score_rule_on_facts(const RuleLike& rule, const FactSet& fs) {
  ScoreResult r;
  for (std::size_t i = 0; i < fs.facts.size(); ++i) {
    Vec actual = rule.apply(fs.facts[i].input);
    if (actual == fs.facts[i].output) {
      ++r.correct;
    } else {
      r.errors.push_back({static_cast<int>(i), std::move(actual)});
    }
  }
  return r;
}

// Scenario-aware score of a parsed candidate: numeric scenarios compare
// against the numeric outputs, the string scenario against the displayed
// string facts. error_lines are rendered in the scenario's fact syntax for
// feedback to a proposer.
struct CandidateScore {
  int correct = 0;
  std::vector<std::string> error_lines;
};

inline CandidateScore score_candidate(const ParsedRule& candidate,
                                      const FactSet& fs, const Scenario& sc) {
  CandidateScore out;
  for (std::size_t i = 0; i < fs.facts.size(); ++i) {
    const Fact& fact = fs.facts[i];
    const bool perturbed =
        fs.perturbed_index && *fs.perturbed_index == static_cast<int>(i);
    bool match;
    std::string actual_text;
    if (sc.kind == ScenarioKind::StringTransformation) {
      if (!candidate.string_mode) {
        throw Error("score_candidate: numeric rule in a string scenario");
      }
      const StrVec x = digits_to_letters(fact.input);
      const StrVec shown = detail::string_fact_output(fs.rule, fact, perturbed);
      const StrVec got = candidate.apply_string(x);
      match = got == shown;
      actual_text = format_str_vec(got);
    } else {
      if (candidate.string_mode) {
        throw Error("score_candidate: string rule in a numeric scenario");
      }
      const Vec got = candidate.apply(fact.input);
      match = got == fact.output;
      actual_text = format_vec(got);
    }
    if (match) {
      ++out.correct;
    } else {
      out.error_lines.push_back(
          render_fact_line(static_cast<int>(i) + 1, fs.rule, fact, sc,
                           perturbed) +
          "    Your rule gives: " + actual_text);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Version-space induction
// ---------------------------------------------------------------------------

// Every rule of the facts' dimension consistent with every fact, in
// canonical enumeration order. The generating rule is always a member for
// unperturbed sets; perturbed sets may yield an empty list.
inline std::vector<MetaRule> enumerative_induce(const FactSet& fs) {
  if (fs.facts.empty()) throw EmptyInput("enumerative_induce: no facts");
  std::vector<MetaRule> out;
  enumerate_rules(fs.dim(), [&](const MetaRule& f) {
    for (const Fact& fact : fs.facts) {
      if (f.apply(fact.input) != fact.output) return true;
    }
    out.push_back(f);
    return true;
  });
  return out;
}

// Narrows an already-computed candidate list against a fact set; with
// growing prefixes this avoids re-enumerating the whole grammar.
inline std::vector<MetaRule> filter_consistent(const std::vector<MetaRule>& rules,
                                               const FactSet& fs) {
  std::vector<MetaRule> out;
  for (const MetaRule& f : rules) {
    bool ok = true;
    for (const Fact& fact : fs.facts) {
      if (f.apply(fact.input) != fact.output) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proposers and refinement loops
// ---------------------------------------------------------------------------

// Produces candidate rule texts for a task; the pluggable half of the
// refinement loops. Implementations must be independent across tasks.
class Proposer {
 public:
  virtual ~Proposer() = default;

  // n candidate rule texts; feedback is empty on the first round.
  virtual std::vector<std::string> propose(const FactSet& fs,
                                           const Scenario& sc,
                                           const std::string& feedback,
                                           int n) = 0;

  // Free-text critique of a candidate (self-refinement feedback). The
  // default approves everything.
  virtual std::string critique(const FactSet& fs, const Scenario& sc,
                               const std::string& rule_text) {
    (void)fs;
    (void)sc;
    (void)rule_text;
    return "correct";
  }
};

// Proposes the canonical texts of version-space rules; when nothing fits all
// facts (perturbed sets), proposes the best-scoring grammar rules instead.
class EnumerativeProposer : public Proposer {
 public:
  std::vector<std::string> propose(const FactSet& fs, const Scenario& sc,
                                   const std::string& feedback,
                                   int n) override {
    (void)feedback;
    if (n < 1) throw ProposerFailure("asked for zero candidates");
    std::vector<MetaRule> fits = enumerative_induce(fs);
    if (fits.empty()) {
      // Best-effort: highest score, canonical-first among ties.
      std::optional<MetaRule> best;
      int best_score = -1;
      enumerate_rules(fs.dim(), [&](const MetaRule& f) {
        const int s = score_rule_on_facts(f, fs).correct;
        if (s > best_score) {
          best_score = s;
          best = f;
        }
        return true;
      });
      fits.push_back(*best);
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < fits.size() && static_cast<int>(out.size()) < n;
         ++i) {
      out.push_back(canonical_rule_answer(fits[i], sc));
    }
    return out;
  }

  std::string critique(const FactSet& fs, const Scenario& sc,
                       const std::string& rule_text) override {
    try {
      const ParsedRule pr = parse_rule_response(rule_text, sc, fs.dim());
      const CandidateScore s = score_candidate(pr, fs, sc);
      if (s.correct == static_cast<int>(fs.size())) return "correct";
      std::string c = "The rule misses " +
                      std::to_string(fs.size() - s.correct) + " facts:";
      for (const std::string& line : s.error_lines) c += "\n" + line;
      return c;
    } catch (const Error& e) {
      return std::string("The rule could not be read: ") + e.what();
    }
  }
};

// Plays back fixed proposal rounds (and critiques) for tests.
class ScriptedProposer : public Proposer {
 public:
  explicit ScriptedProposer(std::vector<std::vector<std::string>> rounds,
                            std::vector<std::string> critiques = {})
      : rounds_(std::move(rounds)), critiques_(std::move(critiques)) {}

  std::vector<std::string> propose(const FactSet&, const Scenario&,
                                   const std::string&, int n) override {
    if (round_ >= rounds_.size()) {
      throw ProposerFailure("script exhausted after " +
                            std::to_string(round_) + " rounds");
    }
    std::vector<std::string> out = rounds_[round_++];
    while (static_cast<int>(out.size()) < n && !out.empty()) {
      out.push_back(out.back());
    }
    if (out.empty()) throw ProposerFailure("scripted round is empty");
    out.resize(static_cast<std::size_t>(n) < out.size() ? n : out.size());
    return out;
  }

  std::string critique(const FactSet&, const Scenario&,
                       const std::string&) override {
    if (critique_at_ >= critiques_.size()) return "correct";
    return critiques_[critique_at_++];
  }

 private:
  std::vector<std::vector<std::string>> rounds_;
  std::vector<std::string> critiques_;
  std::size_t round_ = 0;
  std::size_t critique_at_ = 0;
};

enum class StopReason { FullFit, IterationCap, Approval };

inline const char* stop_reason_name(StopReason s) {
  switch (s) {
    case StopReason::FullFit: return "full-fit";
    case StopReason::IterationCap: return "iteration-cap";
    case StopReason::Approval: return "approval";
  }
  throw Error("stop_reason_name: unknown reason");
}

struct RefinementIteration {
  std::vector<std::string> candidates;
  std::vector<int> scores;  // -1 marks an unparseable candidate
  int best_index = -1;      // best candidate this round, -1 if none parsed
  std::string feedback;     // feedback sent after this round (empty if none)
};

struct RefinementTrace {
  std::vector<RefinementIteration> iterations;
  StopReason stop = StopReason::IterationCap;
  std::vector<int> best_score_history;  // best-so-far per round; non-decreasing
};

struct RefineResult {
  std::string best_text;
  std::optional<ParsedRule> best_rule;
  int best_score = -1;
  RefinementTrace trace;
};

// ProposerFailure carrying the partial trace accumulated before the failure.
struct RefineAbort : ProposerFailure {
  RefineAbort(const std::string& what, RefinementTrace partial)
      : ProposerFailure(what), trace(std::move(partial)) {}
  RefinementTrace trace;
};

namespace detail {

inline std::string refinement_feedback(const std::string& best_text,
                                       int score, int total,
                                       const std::vector<std::string>& errors,
                                       int error_cap) {
  if (best_text.empty()) {
    return "None of your candidate rules could be read. Answer strictly in "
           "the required format.";
  }
  std::string s = "Your best rule so far:\n" + best_text + "\nIt matched " +
                  std::to_string(score) + " of " + std::to_string(total) +
                  " facts.";
  const int shown =
      std::min<int>(error_cap, static_cast<int>(errors.size()));
  if (shown > 0) {
    s += " It fails on:";
    for (int i = 0; i < shown; ++i) s += "\n" + errors[i];
  }
  return s;
}

}  // namespace detail

// Propose-score-refine loop: each round asks for n candidates, scores each
// against the facts, returns immediately when a candidate fits every fact,
// and otherwise feeds the round's best candidate plus up to error_cap of its
// error records back to the proposer. After t rounds the best-scoring
// candidate seen anywhere is returned.
inline RefineResult hypothesis_refine(Proposer& proposer, const FactSet& fs,
                                      const Scenario& sc, int t, int n,
                                      int error_cap = 3,
                                      const ParsePolicy& parse_policy = {}) {
  if (t < 1) throw ConfigError("refinement needs at least one iteration");
  if (n < 1) throw ConfigError("refinement needs at least one candidate");
  const int total = static_cast<int>(fs.size());

  RefineResult result;
  std::string feedback;
  for (int round = 0; round < t; ++round) {
    std::vector<std::string> texts;
    try {
      texts = proposer.propose(fs, sc, feedback, n);
    } catch (const ProposerFailure& e) {
      throw RefineAbort(e.what(), std::move(result.trace));
    }
    RefinementIteration it;
    it.candidates = texts;
    int round_best = -1, round_best_index = -1;
    std::optional<ParsedRule> round_best_rule;
    std::vector<std::string> round_best_errors;
    for (std::size_t c = 0; c < texts.size(); ++c) {
      int score = -1;
      try {
        const ParsedRule pr =
            parse_rule_response(texts[c], sc, fs.dim(), parse_policy);
        const CandidateScore cs = score_candidate(pr, fs, sc);
        score = cs.correct;
        if (score > round_best) {
          round_best = score;
          round_best_index = static_cast<int>(c);
          round_best_rule = pr;
          round_best_errors = cs.error_lines;
        }
      } catch (const Error&) {
        // Unparseable candidate: scored -1, never selected as best.
      }
      it.scores.push_back(score);
    }
    it.best_index = round_best_index;

    if (round_best > result.best_score) {
      result.best_score = round_best;
      result.best_text = texts[round_best_index];
      result.best_rule = round_best_rule;
    }
    result.trace.best_score_history.push_back(result.best_score);

    if (round_best == total) {
      result.trace.iterations.push_back(std::move(it));
      result.trace.stop = StopReason::FullFit;
      return result;
    }
    if (round + 1 < t) {
      feedback = detail::refinement_feedback(
          round_best_index >= 0 ? texts[round_best_index] : std::string(),
          round_best, total, round_best_errors, error_cap);
      it.feedback = feedback;
    }
    result.trace.iterations.push_back(std::move(it));
  }
  result.trace.stop = StopReason::IterationCap;
  return result;
}

// Self-feedback loop: one candidate per round, refined against the
// proposer's own critique text; no fact-level scoring steers the loop and
// the final rule is the last iterate. Optionally stops early when the
// critique contains the approval token.
inline RefineResult self_refine(Proposer& proposer, const FactSet& fs,
                                const Scenario& sc, int t,
                                bool stop_on_approval = false,
                                const std::string& approval_token = "correct",
                                const ParsePolicy& parse_policy = {}) {
  if (t < 1) throw ConfigError("refinement needs at least one iteration");

  RefineResult result;
  std::string text;
  for (int round = 0; round < t; ++round) {
    std::string feedback;
    if (round > 0) {
      feedback = proposer.critique(fs, sc, text);
      result.trace.iterations.back().feedback = feedback;
      if (stop_on_approval) {
        std::string lowered(feedback);
        std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (lowered.find(approval_token) != std::string::npos) {
          result.trace.stop = StopReason::Approval;
          break;
        }
      }
    }
    std::vector<std::string> texts;
    try {
      texts = proposer.propose(fs, sc, feedback, 1);
    } catch (const ProposerFailure& e) {
      throw RefineAbort(e.what(), std::move(result.trace));
    }
    text = texts.at(0);
    RefinementIteration it;
    it.candidates = {text};
    it.best_index = 0;
    result.trace.iterations.push_back(std::move(it));
  }

  result.best_text = text;
  try {
    result.best_rule = parse_rule_response(text, sc, fs.dim(), parse_policy);
    result.best_score = score_candidate(*result.best_rule, fs, sc).correct;
  } catch (const Error&) {
    result.best_rule = std::nullopt;
    result.best_score = -1;
  }
  if (result.trace.stop != StopReason::Approval) {
    result.trace.stop = StopReason::IterationCap;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Majority voting
// ---------------------------------------------------------------------------

// Index of the first member of the most frequent equivalence class; ties go
// to the class seen first.
template <typename T, typename Eq>
std::size_t majority_index(const std::vector<T>& items, Eq eq) {
  if (items.empty()) throw EmptyInput("majority vote over no samples");
  std::vector<std::size_t> reps;
  std::vector<int> counts;
  for (std::size_t i = 0; i < items.size(); ++i) {
    bool found = false;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      if (eq(items[reps[r]], items[i])) {
        ++counts[r];
        found = true;
        break;
      }
    }
    if (!found) {
      reps.push_back(i);
      counts.push_back(1);
    }
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < reps.size(); ++r) {
    if (counts[r] > counts[best]) best = r;  // ties keep the earlier class
  }
  return reps[best];
}

// Majority answer by exact equality.
inline const ParsedAnswer& self_consistency(
    const std::vector<ParsedAnswer>& samples) {
  const std::size_t i =
      majority_index(samples, [](const ParsedAnswer& a, const ParsedAnswer& b) {
        if (a.string_mode != b.string_mode) return false;
        return a.string_mode ? a.strings == b.strings : a.values == b.values;
      });
  return samples[i];
}

// Majority rule by semantic equivalence class (surface forms of the same
// rule vote together).
inline const ParsedRule& self_consistency(
    const std::vector<ParsedRule>& samples, int dim,
    const EquivalencePolicy& policy = {}) {
  const std::size_t i = majority_index(
      samples, [&](const ParsedRule& a, const ParsedRule& b) {
        if (a.string_mode != b.string_mode || a.dim != b.dim) return false;
        return a.string_mode
                   ? semantically_equivalent_string(a, b, dim, policy)
                   : semantically_equivalent(a, b, dim, policy);
      });
  return samples[i];
}

// ---------------------------------------------------------------------------
// Nearest-neighbor prediction
// ---------------------------------------------------------------------------

// Predicts f(x_t) by copying the output of the observed fact nearest to x_t
// (ties to the smallest index). The lenient mode always copies; the strict
// mode only engages when the neighbor's input equals the test input exactly
// and abstains otherwise. Both are reported; neither consults the rule.
struct NeighborPrediction {
  std::size_t neighbor_index = 0;
  double distance = 0.0;
  Vec lenient;
  std::optional<Vec> strict;
};

inline NeighborPrediction neighbor_predict(
    const FactSet& fs, const Vec& test_input,
    DistanceMetric metric = DistanceMetric::chebyshev()) {
  if (fs.facts.empty()) throw EmptyInput("neighbor_predict: no facts");
  NeighborPrediction out;
  double best = -1.0;
  for (std::size_t i = 0; i < fs.facts.size(); ++i) {
    const double d = distance(fs.facts[i].input, test_input, metric);
    if (best < 0 || d < best) {
      best = d;
      out.neighbor_index = i;
    }
  }
  out.distance = best;
  const Fact& nb = fs.facts[out.neighbor_index];
  out.lenient = nb.output;
  if (nb.input == test_input) out.strict = nb.output;
  return out;
}

// ---------------------------------------------------------------------------
// Reference threshold probe
// ---------------------------------------------------------------------------

// Threshold probe backed by the version-space inducer: it commits to the
// canonical-first consistent rule. Rule induction is correct when that rule
// is semantically equivalent to the generating rule; example inference is
// correct when it agrees with the generating rule at the test input. Because
// agreement at one point is weaker than agreement everywhere, the deduction
// threshold never exceeds the induction threshold for the same stream.
inline ThresholdProbe make_reference_probe(
    const EquivalencePolicy& policy = {}) {
  ThresholdProbe p;
  p.rule_induction = [policy](const FactSet& prefix) {
    const std::vector<MetaRule> fits = enumerative_induce(prefix);
    if (fits.empty()) return false;
    return semantically_equivalent(fits.front(), prefix.rule, prefix.dim(),
                                   policy);
  };
  p.example_inference = [](const FactSet& prefix, const Vec& test_input) {
    const std::vector<MetaRule> fits = enumerative_induce(prefix);
    if (fits.empty()) return false;
    return fits.front().apply(test_input) == prefix.rule.apply(test_input);
  };
  return p;
}

}  // namespace mirage

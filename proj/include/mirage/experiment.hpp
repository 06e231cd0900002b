#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mirage/client.hpp"
#include "mirage/dataset.hpp"
#include "mirage/errors.hpp"
#include "mirage/fact.hpp"
#include "mirage/grade.hpp"
#include "mirage/metrics.hpp"
#include "mirage/render.hpp"
#include "mirage/rng.hpp"
#include "mirage/rule.hpp"
#include "mirage/solve.hpp"
#include "mirage/types.hpp"

namespace mirage {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// How answers are produced per task. "io": one completion. "cot": one
// completion with the step-by-step scaffold. "sc": n sampled completions,
// majority vote. "id": induce a rule first, then apply it to the test input.
// "sr": self-refinement. "hr": propose-score-refine. "nn"/"nn-strict":
// nearest-neighbor baselines (no model).
struct MethodSpec {
  std::string name = "io";
  int shots = 0;      // solved example prompts prepended
  int t = 3;          // refinement iterations
  int n = 5;          // candidates per round (hr) / samples (sc)
  int error_cap = 3;  // error records included in refinement feedback
};

// Neighborhood constraint on generated fact inputs.
struct ConstraintSpec {
  bool enabled = false;
  int epsilon = 1;
  std::optional<std::string> fact_class;  // "IF", "CF", "OF", or unset
  std::string metric = "chebyshev";
};

// Extra graded test points around the origin test input.
struct RegionSpec {
  bool enabled = false;
  std::optional<int> eta;  // unset = whole input space
  int n_points = 5;
};

struct ModelSpec {
  std::string kind = "oracle";  // oracle|random|fixed|remote|reference|never
  std::string model = "gpt-4o";
  std::string base_url = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "MIRAGE_API_KEY";
  double temperature = 0.0;
  int max_tokens = 1024;
  std::uint64_t mock_seed = 0;
  std::string fixed_text = "I cannot determine the rule.";
  std::string cache_dir;  // empty = no cache
  int concurrency = 4;
  int timeout_seconds = 120;
  int retry_attempts = 5;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int dim = 3;
  int n_facts = 5;
  int samples = 20;
  bool perturb = false;
  bool strict_text = false;  // grade by canonical text, not semantics
  std::vector<std::string> scenarios = {"LT"};
  std::string rp_template = "trade";  // used when a scenario is bare "RP"
  std::vector<std::string> tasks = {"RI", "EI"};
  MethodSpec method;
  ConstraintSpec constraint;
  RegionSpec region;
  ModelSpec model;

  void validate() const;
};

inline Scenario resolve_scenario(const ExperimentConfig& cfg,
                                 const std::string& label) {
  if (label == "RP") return Scenario::rp(cfg.rp_template);
  return scenario_from_label(label);
}

inline void ExperimentConfig::validate() const {
  if (dim < 2 || dim > kMaxDim) {
    throw ConfigError("dim must be between 2 and " + std::to_string(kMaxDim));
  }
  if (n_facts < 1) throw ConfigError("n_facts must be positive");
  if (samples < 1) throw ConfigError("samples must be positive");
  if (scenarios.empty()) throw ConfigError("at least one scenario required");
  for (const std::string& s : scenarios) {
    const Scenario sc = resolve_scenario(*this, s);
    if (sc.story && dim > static_cast<int>(sc.story->objects.size())) {
      throw ConfigError("scenario " + s + " supports at most " +
                        std::to_string(sc.story->objects.size()) +
                        " components");
    }
  }
  if (tasks.empty()) throw ConfigError("at least one task required");
  bool has_ri = false, has_ei = false;
  for (const std::string& t : tasks) {
    if (t == "RI") {
      has_ri = true;
    } else if (t == "EI") {
      has_ei = true;
    } else {
      throw ConfigError("unknown task: " + t);
    }
  }
  static const std::set<std::string> kMethods = {
      "io", "cot", "sc", "id", "sr", "hr", "nn", "nn-strict"};
  if (!kMethods.count(method.name)) {
    throw ConfigError("unknown method: " + method.name);
  }
  if ((method.name == "nn" || method.name == "nn-strict") && has_ri) {
    throw ConfigError("nearest-neighbor methods apply only to EI tasks");
  }
  if (method.shots < 0) throw ConfigError("shots must be non-negative");
  if (method.t < 1) throw ConfigError("method.t must be positive");
  if (method.n < 1) throw ConfigError("method.n must be positive");
  if (method.error_cap < 0) throw ConfigError("error_cap must be non-negative");
  if (constraint.enabled) {
    if (constraint.epsilon < 0) throw ConfigError("epsilon must be >= 0");
    distance_metric_from_name(constraint.metric);
    if (constraint.fact_class) fact_class_from_name(*constraint.fact_class);
  }
  if (region.enabled) {
    if (!has_ei) throw ConfigError("test regions require EI tasks");
    if (region.n_points < 1) throw ConfigError("n_points must be positive");
    if (region.eta && *region.eta < 0) throw ConfigError("eta must be >= 0");
  }
  static const std::set<std::string> kKinds = {
      "oracle", "random", "fixed", "remote", "reference", "never"};
  if (!kKinds.count(model.kind)) {
    throw ConfigError("unknown model kind: " + model.kind);
  }
  if (model.concurrency < 1) throw ConfigError("concurrency must be positive");
  if (model.max_tokens < 1) throw ConfigError("max_tokens must be positive");
  if (model.retry_attempts < 1) {
    throw ConfigError("retry_attempts must be positive");
  }
}

namespace detail {

inline void reject_unknown_keys(const Json& j,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown config key in " + where + ": " + item.key());
    }
  }
}

}  // namespace detail

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["dim"] = c.dim;
  j["n_facts"] = c.n_facts;
  j["samples"] = c.samples;
  j["perturb"] = c.perturb;
  j["strict_text"] = c.strict_text;
  j["scenarios"] = c.scenarios;
  j["rp_template"] = c.rp_template;
  j["tasks"] = c.tasks;
  j["method"] = Json{{"name", c.method.name},
                     {"shots", c.method.shots},
                     {"t", c.method.t},
                     {"n", c.method.n},
                     {"error_cap", c.method.error_cap}};
  Json constraint{{"enabled", c.constraint.enabled},
                  {"epsilon", c.constraint.epsilon},
                  {"metric", c.constraint.metric}};
  if (c.constraint.fact_class) constraint["fact_class"] = *c.constraint.fact_class;
  j["constraint"] = constraint;
  Json region{{"enabled", c.region.enabled}, {"n_points", c.region.n_points}};
  if (c.region.eta) {
    region["eta"] = *c.region.eta;
  } else {
    region["eta"] = nullptr;
  }
  j["region"] = region;
  j["model"] = Json{{"kind", c.model.kind},
                    {"model", c.model.model},
                    {"base_url", c.model.base_url},
                    {"path", c.model.path},
                    {"api_key_env", c.model.api_key_env},
                    {"temperature", c.model.temperature},
                    {"max_tokens", c.model.max_tokens},
                    {"mock_seed", c.model.mock_seed},
                    {"fixed_text", c.model.fixed_text},
                    {"cache_dir", c.model.cache_dir},
                    {"concurrency", c.model.concurrency},
                    {"timeout_seconds", c.model.timeout_seconds},
                    {"retry_attempts", c.model.retry_attempts}};
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    detail::reject_unknown_keys(
        j,
        {"record_type", "seed", "dim", "n_facts", "samples", "perturb",
         "strict_text", "scenarios", "rp_template", "tasks", "method",
         "constraint", "region", "model"},
        "config");
    c.seed = j.value("seed", c.seed);
    c.dim = j.value("dim", c.dim);
    c.n_facts = j.value("n_facts", c.n_facts);
    c.samples = j.value("samples", c.samples);
    c.perturb = j.value("perturb", c.perturb);
    c.strict_text = j.value("strict_text", c.strict_text);
    if (j.contains("scenarios")) {
      c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
    }
    c.rp_template = j.value("rp_template", c.rp_template);
    if (j.contains("tasks")) {
      c.tasks = j.at("tasks").get<std::vector<std::string>>();
    }
    if (j.contains("method")) {
      const Json& m = j.at("method");
      detail::reject_unknown_keys(m, {"name", "shots", "t", "n", "error_cap"},
                                  "method");
      c.method.name = m.value("name", c.method.name);
      c.method.shots = m.value("shots", c.method.shots);
      c.method.t = m.value("t", c.method.t);
      c.method.n = m.value("n", c.method.n);
      c.method.error_cap = m.value("error_cap", c.method.error_cap);
    }
    if (j.contains("constraint")) {
      const Json& k = j.at("constraint");
      detail::reject_unknown_keys(
          k, {"enabled", "epsilon", "fact_class", "metric"}, "constraint");
      c.constraint.enabled = k.value("enabled", c.constraint.enabled);
      c.constraint.epsilon = k.value("epsilon", c.constraint.epsilon);
      if (k.contains("fact_class") && !k.at("fact_class").is_null()) {
        c.constraint.fact_class = k.at("fact_class").get<std::string>();
      }
      c.constraint.metric = k.value("metric", c.constraint.metric);
    }
    if (j.contains("region")) {
      const Json& r = j.at("region");
      detail::reject_unknown_keys(r, {"enabled", "eta", "n_points"}, "region");
      c.region.enabled = r.value("enabled", c.region.enabled);
      if (r.contains("eta") && !r.at("eta").is_null()) {
        c.region.eta = r.at("eta").get<int>();
      }
      c.region.n_points = r.value("n_points", c.region.n_points);
    }
    if (j.contains("model")) {
      const Json& m = j.at("model");
      detail::reject_unknown_keys(
          m,
          {"kind", "model", "base_url", "path", "api_key_env", "temperature",
           "max_tokens", "mock_seed", "fixed_text", "cache_dir", "concurrency",
           "timeout_seconds", "retry_attempts"},
          "model");
      c.model.kind = m.value("kind", c.model.kind);
      c.model.model = m.value("model", c.model.model);
      c.model.base_url = m.value("base_url", c.model.base_url);
      c.model.path = m.value("path", c.model.path);
      c.model.api_key_env = m.value("api_key_env", c.model.api_key_env);
      c.model.temperature = m.value("temperature", c.model.temperature);
      c.model.max_tokens = m.value("max_tokens", c.model.max_tokens);
      c.model.mock_seed = m.value("mock_seed", c.model.mock_seed);
      c.model.fixed_text = m.value("fixed_text", c.model.fixed_text);
      c.model.cache_dir = m.value("cache_dir", c.model.cache_dir);
      c.model.concurrency = m.value("concurrency", c.model.concurrency);
      c.model.timeout_seconds =
          m.value("timeout_seconds", c.model.timeout_seconds);
      c.model.retry_attempts =
          m.value("retry_attempts", c.model.retry_attempts);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

namespace detail {

// Draws a structurally new rule that can actually supply n admissible facts
// under the constraint. Rules that cannot — e.g. one whose output is the
// zero vector everywhere, so every fact is trivial — are consumed from the
// batch budget and skipped. Constraint-level infeasibility (a region too
// small for n facts regardless of rule) surfaces as ConfigError instead.
inline FactSet draw_rule_and_facts(int dim, int n,
                                   const GenerationConstraint& gen,
                                   std::set<std::string>& used, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    MetaRule cand = sample_rule(dim, rng);
    if (!used.insert(cand.id()).second) continue;
    try {
      return generate_fact_set(cand, n, gen, rng);
    } catch (const GenerationExhausted&) {
      // This rule cannot fill the fact set; it stays consumed. Redraw.
    }
  }
  throw GenerationExhausted(
      "could not draw a structurally new rule able to supply " +
      std::to_string(n) + " facts for this batch");
}

}  // namespace detail

// Generates the full task grid for a configuration: for every scenario and
// task, `samples` independent items, each from its own split of the root
// seed, with structurally distinct rules within each (scenario, task) batch.
inline std::vector<DatasetRecord> generate_dataset(
    const ExperimentConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  const bool needs_aux = cfg.method.name == "id" || cfg.method.name == "sr" ||
                         cfg.method.name == "hr";
  const PromptStyle style =
      (cfg.method.name == "cot" || cfg.method.name == "sc")
          ? PromptStyle::ChainOfThought
          : PromptStyle::Direct;

  std::vector<DatasetRecord> out;
  std::uint64_t cell_index = 0;
  for (const std::string& label : cfg.scenarios) {
    const Scenario sc = resolve_scenario(cfg, label);
    for (const std::string& task_name : cfg.tasks) {
      const TaskKind task = task_kind_from_name(task_name);
      std::set<std::string> used_rules;
      for (int i = 0; i < cfg.samples; ++i) {
        Rng rng = root.split((cell_index << 32) ^ static_cast<std::uint64_t>(i));
        const std::uint64_t item_seed = rng.seed();

        const bool need_test_point = task == TaskKind::ExampleInference ||
                                     cfg.constraint.enabled ||
                                     cfg.region.enabled;
        std::optional<Vec> test_input;
        GenerationConstraint gen;
        if (need_test_point) {
          test_input = sample_input(cfg.dim, rng);
          NeighborhoodTarget target;
          target.test_input = *test_input;
          if (cfg.constraint.enabled) {
            target.epsilon = cfg.constraint.epsilon;
            target.metric = distance_metric_from_name(cfg.constraint.metric);
            if (cfg.constraint.fact_class) {
              target.fact_class =
                  fact_class_from_name(*cfg.constraint.fact_class);
            }
          } else {
            target.epsilon = 0;  // only excludes the test input itself
          }
          gen.target = target;
        }
        FactSet facts = detail::draw_rule_and_facts(cfg.dim, cfg.n_facts, gen,
                                                    used_rules, rng);
        if (cfg.perturb) facts = perturb_fact_set(facts, rng);

        DatasetRecord rec;
        rec.scenario = sc;
        rec.task = task;
        rec.facts = std::move(facts);
        rec.test_input = test_input;
        rec.item_seed = item_seed;
        rec.method = cfg.method.name;
        rec.shots = cfg.method.shots;
        if (cfg.constraint.enabled) {
          rec.epsilon = cfg.constraint.epsilon;
          rec.fact_class = cfg.constraint.fact_class;
          const std::vector<FactClass> classes = annotate_classes(
              rec.facts, *test_input, cfg.constraint.epsilon);
          for (FactClass fc : classes) {
            rec.fact_classes.push_back(fact_class_name(fc));
          }
        }

        std::vector<Vec> extras;
        if (task == TaskKind::ExampleInference && cfg.region.enabled) {
          std::vector<Vec> exclusions;
          for (const Fact& f : rec.facts.facts) exclusions.push_back(f.input);
          exclusions.push_back(*test_input);
          extras = sample_test_inputs(*test_input, cfg.region.eta,
                                      cfg.region.n_points, exclusions, rng);
          rec.eta = cfg.region.eta;
          rec.eta_unbounded = !cfg.region.eta;
        }

        const RenderedQuestion q = render_question(
            rec.facts, task,
            sc, task == TaskKind::ExampleInference ? test_input : std::nullopt,
            cfg.method.shots, rng, style);
        rec.prompt = q.prompt;
        rec.expected_text = q.expected_text;

        for (const Vec& x : extras) {
          const RenderedQuestion eq =
              render_question(rec.facts, TaskKind::ExampleInference, sc, x,
                              cfg.method.shots, rng, style);
          rec.extra_inputs.push_back(x);
          rec.extra_prompts.push_back(eq.prompt);
          rec.extra_expected.push_back(eq.expected_text);
        }

        if (needs_aux && task == TaskKind::ExampleInference) {
          const RenderedQuestion rq =
              render_question(rec.facts, TaskKind::RuleInduction, sc,
                              std::nullopt, cfg.method.shots, rng, style);
          rec.aux_prompt = rq.prompt;
          rec.aux_expected = rq.expected_text;
        }

        rec.id = sc.label() + "-" + task_name + "-" + [&] {
          char buf[16];
          std::snprintf(buf, sizeof buf, "%04d", i);
          return std::string(buf);
        }();
        out.push_back(std::move(rec));
      }
      ++cell_index;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clients and proposers
// ---------------------------------------------------------------------------

// Builds the configured client. The oracle needs the dataset it will be
// queried on (its answer key is the records' expected texts).
inline std::unique_ptr<ModelClient> make_client(
    const ModelSpec& spec, const std::vector<DatasetRecord>* records) {
  if (spec.kind == "oracle") {
    if (!records) throw ConfigError("the oracle client needs a dataset");
    auto oracle = std::make_unique<OracleClient>();
    for (const DatasetRecord& r : *records) {
      oracle->register_answer(r.prompt, r.expected_text);
      for (std::size_t i = 0; i < r.extra_prompts.size(); ++i) {
        oracle->register_answer(r.extra_prompts[i], r.extra_expected[i]);
      }
      if (!r.aux_prompt.empty()) {
        oracle->register_answer(r.aux_prompt, r.aux_expected);
      }
    }
    return oracle;
  }
  if (spec.kind == "random") {
    return std::make_unique<UniformRandomClient>(spec.mock_seed);
  }
  if (spec.kind == "fixed") {
    return std::make_unique<FixedClient>(spec.fixed_text);
  }
  if (spec.kind == "remote") {
    RemoteEndpoint ep;
    ep.base_url = spec.base_url;
    ep.path = spec.path;
    ep.model = spec.model;
    ep.api_key_env = spec.api_key_env;
    ep.timeout_seconds = spec.timeout_seconds;
    ep.retry.max_attempts = spec.retry_attempts;
    ep.max_in_flight = spec.concurrency;
    std::shared_ptr<ResponseCache> cache;
    if (!spec.cache_dir.empty()) {
      cache = std::make_shared<ResponseCache>(spec.cache_dir);
    }
    return std::make_unique<RemoteClient>(std::move(ep), std::move(cache));
  }
  throw ConfigError("model kind '" + spec.kind +
                    "' is a probe, not a completion client");
}

// Proposer backed by a model client: round one sends the base prompt,
// later rounds wrap the previous reply and the feedback in a refine prompt.
class ModelProposer : public Proposer {
 public:
  ModelProposer(ModelClient& client, std::string base_prompt,
                CompletionParams params)
      : client_(client), base_(std::move(base_prompt)), params_(params) {}

  std::vector<std::string> propose(const FactSet&, const Scenario&,
                                   const std::string& feedback,
                                   int n) override {
    const std::string prompt =
        feedback.empty() ? base_
                         : render_refine_prompt(base_, previous_, feedback);
    CompletionParams p = params_;
    p.n = n;
    try {
      std::vector<std::string> out = client_.complete(prompt, p);
      if (out.empty()) throw ProposerFailure("model returned no completions");
      previous_ = out.front();
      return out;
    } catch (const TransportError& e) {
      throw ProposerFailure(e.what());
    }
  }

  std::string critique(const FactSet&, const Scenario&,
                       const std::string& rule_text) override {
    CompletionParams p = params_;
    p.n = 1;
    try {
      return client_.complete(render_critique_prompt(base_, rule_text), p)
          .at(0);
    } catch (const TransportError& e) {
      throw ProposerFailure(e.what());
    }
  }

 private:
  ModelClient& client_;
  std::string base_;
  std::string previous_;
  CompletionParams params_;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

// Reads a partial results file, tolerating a torn final line (a crash in the
// middle of an append). Corruption anywhere else still throws.
inline std::vector<ResultRecord> load_partial_results(
    const std::filesystem::path& path, Json* header_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  std::vector<ResultRecord> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool last = i + 1 == lines.size();
    Json j;
    try {
      j = Json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      if (last) break;
      throw SchemaError(std::string("invalid JSON: ") + e.what(), i + 1);
    }
    if (i == 0) {
      if (!j.is_object() ||
          j.value("record_type", std::string()) != "config") {
        throw SchemaError("first line is not a config header", 1);
      }
      if (header_out) *header_out = j;
      continue;
    }
    try {
      out.push_back(result_from_json(j, i + 1));
    } catch (const SchemaError&) {
      if (last) break;
      throw;
    }
  }
  return out;
}

inline RenderedQuestion question_stub(const Scenario& sc, TaskKind task,
                                      const MetaRule& rule,
                                      const std::optional<Vec>& test_input) {
  RenderedQuestion q;
  q.scenario = sc;
  q.task = task;
  q.rule = rule;
  q.test_input = test_input;
  q.dim = rule.dim();
  return q;
}

// Judges an example-inference task answered by inducing a rule and applying
// it to the test input.
inline Judgment judge_rule_first(const ParsedRule& candidate,
                                 const MetaRule& truth, const Vec& test_input,
                                 const Scenario& sc) {
  if (sc.kind == ScenarioKind::StringTransformation) {
    const StrVec x = digits_to_letters(test_input);
    const StrVec want = truth.apply_string(x);
    const StrVec got = candidate.apply_string(x);
    if (got == want) {
      return {Verdict::Correct, "induced rule answers the test input",
              std::nullopt, std::nullopt};
    }
    return {Verdict::Incorrect,
            "induced rule answers " + format_str_vec(got) + ", expected " +
                format_str_vec(want),
            std::nullopt, x};
  }
  const Vec want = truth.apply(test_input);
  const Vec got = candidate.apply(test_input);
  if (got == want) {
    return {Verdict::Correct, "induced rule answers the test input",
            std::nullopt, std::nullopt};
  }
  return {Verdict::Incorrect,
          "induced rule answers " + format_vec(got) + ", expected " +
              format_vec(want),
          test_input, std::nullopt};
}

// Answer text for a nearest-neighbor prediction, in the scenario's answer
// syntax so the stored text regrades like any other response.
inline std::string neighbor_answer_text(const FactSet& fs,
                                        std::size_t neighbor_index,
                                        const Scenario& sc) {
  const Fact& nb = fs.facts[neighbor_index];
  if (sc.kind == ScenarioKind::StringTransformation) {
    const bool perturbed =
        fs.perturbed_index &&
        *fs.perturbed_index == static_cast<int>(neighbor_index);
    return "Answer: " +
           format_str_vec(string_fact_output(fs.rule, nb, perturbed));
  }
  return "Answer: " + format_vec(nb.output);
}

}  // namespace detail

// Evaluates one task with the configured method. Transport failures and
// aborted refinements are recorded as unparseable with a diagnostic reason,
// never thrown, so one bad item cannot sink a run.
inline ResultRecord evaluate_one(const DatasetRecord& rec, ModelClient* client,
                                 const ExperimentConfig& cfg) {
  const Scenario& sc = rec.scenario;
  const MetaRule& truth = rec.facts.rule;
  JudgePolicy judge;
  judge.strict_text_match = cfg.strict_text;
  CompletionParams params;
  params.temperature = cfg.model.temperature;
  params.max_tokens = cfg.model.max_tokens;

  ResultRecord r;
  r.id = rec.id;
  r.scenario_label = sc.label();
  r.task = rec.task;
  r.rule = truth;
  r.test_input = rec.test_input;
  r.method = rec.method;
  r.shots = rec.shots;
  r.n_facts = static_cast<int>(rec.facts.size());
  r.perturbed = rec.facts.perturbed_index.has_value();
  r.epsilon = rec.epsilon;
  r.fact_class = rec.fact_class;
  r.eta = rec.eta;
  r.eta_unbounded = rec.eta_unbounded;

  const std::string& method = rec.method;
  const bool ei = rec.task == TaskKind::ExampleInference;
  const RenderedQuestion q =
      detail::question_stub(sc, rec.task, truth, rec.test_input);

  auto need_client = [&]() -> ModelClient& {
    if (!client) throw ConfigError("method " + method + " needs a client");
    return *client;
  };

  try {
    if (method == "nn" || method == "nn-strict") {
      const NeighborPrediction pred =
          neighbor_predict(rec.facts, *rec.test_input);
      if (method == "nn-strict" && !pred.strict) {
        r.graded_text.clear();
        r.judgment = {Verdict::Unparseable,
                      "abstained: no fact shows the test input exactly",
                      std::nullopt, std::nullopt};
      } else {
        r.graded_text =
            detail::neighbor_answer_text(rec.facts, pred.neighbor_index, sc);
        r.judgment = grade_response(r.graded_text, q, judge);
      }
    } else if (ei && (method == "sr" || method == "hr")) {
      ModelProposer proposer(need_client(), rec.aux_prompt, params);
      RefineResult rr;
      try {
        rr = method == "hr"
                 ? hypothesis_refine(proposer, rec.facts, sc, cfg.method.t,
                                     cfg.method.n, cfg.method.error_cap,
                                     judge.parse)
                 : self_refine(proposer, rec.facts, sc, cfg.method.t, false,
                               "correct", judge.parse);
        for (const RefinementIteration& it : rr.trace.iterations) {
          for (const std::string& c : it.candidates) r.responses.push_back(c);
        }
        r.graded_text = rr.best_text;
        if (rr.best_rule) {
          r.judgment = detail::judge_rule_first(*rr.best_rule, truth,
                                                *rec.test_input, sc);
        } else {
          r.judgment = {Verdict::Unparseable, "no candidate rule parsed",
                        std::nullopt, std::nullopt};
        }
      } catch (const RefineAbort& e) {
        for (const RefinementIteration& it : e.trace.iterations) {
          for (const std::string& c : it.candidates) r.responses.push_back(c);
        }
        r.judgment = {Verdict::Unparseable,
                      std::string("proposer failure: ") + e.what(),
                      std::nullopt, std::nullopt};
      }
    } else if (!ei && (method == "sr" || method == "hr")) {
      ModelProposer proposer(need_client(), rec.prompt, params);
      try {
        RefineResult rr =
            method == "hr"
                ? hypothesis_refine(proposer, rec.facts, sc, cfg.method.t,
                                    cfg.method.n, cfg.method.error_cap,
                                    judge.parse)
                : self_refine(proposer, rec.facts, sc, cfg.method.t, false,
                              "correct", judge.parse);
        for (const RefinementIteration& it : rr.trace.iterations) {
          for (const std::string& c : it.candidates) r.responses.push_back(c);
        }
        r.graded_text = rr.best_text;
        r.judgment = grade_response(r.graded_text, q, judge);
      } catch (const RefineAbort& e) {
        for (const RefinementIteration& it : e.trace.iterations) {
          for (const std::string& c : it.candidates) r.responses.push_back(c);
        }
        r.judgment = {Verdict::Unparseable,
                      std::string("proposer failure: ") + e.what(),
                      std::nullopt, std::nullopt};
      }
    } else if (ei && method == "id") {
      params.n = 1;
      r.responses = need_client().complete(rec.aux_prompt, params);
      r.graded_text = r.responses.at(0);
      try {
        const ParsedRule pr = parse_rule_response(r.graded_text, sc,
                                                  truth.dim(), judge.parse);
        r.judgment =
            detail::judge_rule_first(pr, truth, *rec.test_input, sc);
      } catch (const Error& e) {
        r.judgment = {Verdict::Unparseable, e.what(), std::nullopt,
                      std::nullopt};
      }
    } else if (method == "sc") {
      params.n = cfg.method.n;
      r.responses = need_client().complete(rec.prompt, params);
      std::vector<std::size_t> kept;
      int winner = -1;
      if (ei) {
        std::vector<ParsedAnswer> answers;
        for (std::size_t i = 0; i < r.responses.size(); ++i) {
          try {
            answers.push_back(parse_answer_response(r.responses[i], sc,
                                                    truth.dim(), judge.parse));
            kept.push_back(i);
          } catch (const Error&) {
          }
        }
        if (!answers.empty()) {
          const ParsedAnswer& maj = self_consistency(answers);
          winner = static_cast<int>(kept[&maj - answers.data()]);
        }
      } else {
        std::vector<ParsedRule> rules;
        for (std::size_t i = 0; i < r.responses.size(); ++i) {
          try {
            rules.push_back(parse_rule_response(r.responses[i], sc,
                                                truth.dim(), judge.parse));
            kept.push_back(i);
          } catch (const Error&) {
          }
        }
        if (!rules.empty()) {
          const ParsedRule& maj =
              self_consistency(rules, truth.dim(), judge.equivalence);
          winner = static_cast<int>(kept[&maj - rules.data()]);
        }
      }
      if (winner < 0) {
        r.graded_text = r.responses.empty() ? std::string() : r.responses[0];
        r.judgment = {Verdict::Unparseable, "no sample could be parsed",
                      std::nullopt, std::nullopt};
      } else {
        r.graded_text = r.responses[winner];
        r.judgment = grade_response(r.graded_text, q, judge);
      }
    } else {  // io, cot, and id on rule-induction tasks
      params.n = 1;
      r.responses = need_client().complete(rec.prompt, params);
      r.graded_text = r.responses.at(0);
      r.judgment = grade_response(r.graded_text, q, judge);
    }
  } catch (const TransportError& e) {
    r.judgment = {Verdict::Unparseable, std::string("transport: ") + e.what(),
                  std::nullopt, std::nullopt};
  }

  // Extra test points are always answered with a single plain completion
  // (or the neighbor baseline when that is the method under test).
  for (std::size_t i = 0; i < rec.extra_inputs.size(); ++i) {
    const Vec& x = rec.extra_inputs[i];
    const RenderedQuestion eq =
        detail::question_stub(sc, TaskKind::ExampleInference, truth, x);
    std::string text;
    Judgment jg;
    try {
      if (method == "nn" || method == "nn-strict") {
        const NeighborPrediction pred = neighbor_predict(rec.facts, x);
        if (method == "nn-strict" && !pred.strict) {
          jg = {Verdict::Unparseable,
                "abstained: no fact shows the test input exactly",
                std::nullopt, std::nullopt};
        } else {
          text =
              detail::neighbor_answer_text(rec.facts, pred.neighbor_index, sc);
          jg = grade_response(text, eq, judge);
        }
      } else {
        CompletionParams p = params;
        p.n = 1;
        const std::vector<std::string> resp =
            need_client().complete(rec.extra_prompts[i], p);
        text = resp.at(0);
        jg = grade_response(text, eq, judge);
      }
    } catch (const TransportError& e) {
      jg = {Verdict::Unparseable, std::string("transport: ") + e.what(),
            std::nullopt, std::nullopt};
    }
    r.extra_inputs.push_back(x);
    r.extra_graded.push_back(text);
    r.extra_judgments.push_back(jg);
  }
  return r;
}

// Evaluates every record, skipping ids already present in the partial file
// when resuming. Completions append to "<out>.partial" as they finish (crash
// safety); the final ordered file is written only when every task is done,
// after which the partial file is removed. Rerunning a finished experiment
// with the same configuration reproduces the output byte for byte when the
// client is deterministic or cached.
inline std::vector<ResultRecord> evaluate_records(
    const std::vector<DatasetRecord>& records, ModelClient* client,
    const ExperimentConfig& cfg, const std::filesystem::path& out_path,
    bool resume = false) {
  const std::filesystem::path partial = out_path.string() + ".partial";
  Json header = config_to_json(cfg);
  header["record_type"] = "config";

  std::map<std::string, ResultRecord> done;
  if (resume && std::filesystem::exists(partial)) {
    Json stored;
    for (ResultRecord& r : detail::load_partial_results(partial, &stored)) {
      done.emplace(r.id, std::move(r));
    }
    Json stored_cmp = stored;
    stored_cmp.erase("record_type");
    Json want_cmp = config_to_json(cfg);
    if (stored_cmp != want_cmp) {
      throw ConfigError(
          "partial results were produced by a different configuration");
    }
    // Rewrite the partial cleanly in case the tail line was torn.
    std::vector<Json> kept;
    kept.reserve(done.size());
    for (const auto& [id, r] : done) kept.push_back(result_to_json(r));
    write_jsonl(partial, stored, kept);
  } else {
    std::filesystem::remove(partial);
  }
  if (!std::filesystem::exists(partial)) {
    append_jsonl_line(partial, header);
  }

  std::vector<std::optional<ResultRecord>> slots(records.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = done.find(records[i].id);
    if (it != done.end()) {
      slots[i] = it->second;
    } else {
      todo.push_back(i);
    }
  }

  std::mutex io_mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto work = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= todo.size()) return;
      const std::size_t i = todo[t];
      try {
        ResultRecord r = evaluate_one(records[i], client, cfg);
        std::lock_guard<std::mutex> lock(io_mu);
        append_jsonl_line(partial, result_to_json(r));
        slots[i] = std::move(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(io_mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int workers =
      std::clamp(client ? cfg.model.concurrency : 1, 1, 16);
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<ResultRecord> ordered;
  ordered.reserve(records.size());
  for (std::optional<ResultRecord>& s : slots) ordered.push_back(std::move(*s));
  write_results(out_path, config_to_json(cfg), ordered);
  std::filesystem::remove(partial);
  return ordered;
}

// ---------------------------------------------------------------------------
// Scoring and aggregation
// ---------------------------------------------------------------------------

// Recomputes the judgment of a stored result from its graded text alone.
inline Judgment rejudge_record(const ResultRecord& r,
                               const JudgePolicy& policy = {}) {
  const Scenario sc = scenario_from_label(r.scenario_label);
  const bool rule_first =
      r.task == TaskKind::ExampleInference &&
      (r.method == "id" || r.method == "sr" || r.method == "hr");
  if (r.graded_text.empty()) {
    return {Verdict::Unparseable, r.judgment.reason.empty()
                                      ? "empty graded text"
                                      : r.judgment.reason,
            std::nullopt, std::nullopt};
  }
  if (rule_first) {
    try {
      const ParsedRule pr =
          parse_rule_response(r.graded_text, sc, r.rule.dim(), policy.parse);
      return detail::judge_rule_first(pr, r.rule, *r.test_input, sc);
    } catch (const Error& e) {
      return {Verdict::Unparseable, e.what(), std::nullopt, std::nullopt};
    }
  }
  const RenderedQuestion q =
      detail::question_stub(sc, r.task, r.rule, r.test_input);
  return grade_response(r.graded_text, q, policy);
}

inline TaskResult to_task_result(const ResultRecord& r) {
  TaskResult t;
  t.id = r.id;
  t.rule_id = r.rule.id();
  t.scenario = r.scenario_label;
  t.task = task_kind_name(r.task);
  t.method = r.method;
  t.dim = r.rule.dim();
  t.n_facts = r.n_facts;
  t.perturbed = r.perturbed;
  t.epsilon = r.epsilon;
  t.fact_class = r.fact_class;
  t.eta = r.eta;
  t.eta_unbounded = r.eta_unbounded;
  t.verdict = r.judgment.verdict;
  t.reason = r.judgment.reason;
  if (r.test_input) t.test_input = *r.test_input;
  for (const Judgment& j : r.extra_judgments) {
    t.extra_verdicts.push_back(j.verdict);
  }
  return t;
}

inline std::vector<TaskResult> to_task_results(
    const std::vector<ResultRecord>& rs) {
  std::vector<TaskResult> out;
  out.reserve(rs.size());
  for (const ResultRecord& r : rs) out.push_back(to_task_result(r));
  return out;
}

// Re-judges stored results (fresh policy, same raw text) and reports both
// the rejudged task results and how many verdicts changed vs. the stored
// judgments.
struct ScoreOutcome {
  std::vector<TaskResult> results;
  std::size_t changed = 0;
};

inline ScoreOutcome score_results(const std::vector<ResultRecord>& records,
                                  const JudgePolicy& policy = {}) {
  ScoreOutcome out;
  for (const ResultRecord& r : records) {
    ResultRecord fresh = r;
    fresh.judgment = rejudge_record(r, policy);
    if (fresh.judgment.verdict != r.judgment.verdict) ++out.changed;
    const Scenario sc = scenario_from_label(r.scenario_label);
    for (std::size_t i = 0; i < r.extra_inputs.size(); ++i) {
      const RenderedQuestion q = detail::question_stub(
          sc, TaskKind::ExampleInference, r.rule, r.extra_inputs[i]);
      Judgment jg;
      if (r.extra_graded[i].empty()) {
        jg = r.extra_judgments[i];
      } else {
        jg = grade_response(r.extra_graded[i], q, policy);
      }
      if (jg.verdict != r.extra_judgments[i].verdict) ++out.changed;
      fresh.extra_judgments[i] = jg;
    }
    out.results.push_back(to_task_result(fresh));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threshold and probe runs
// ---------------------------------------------------------------------------

// Builds the configured correctness probe: "reference" = the enumerative
// solver, "oracle"/"never" = calibration endpoints, anything else = the
// model client answering rendered prefix prompts.
inline ThresholdProbe make_threshold_probe(const ExperimentConfig& cfg,
                                           ModelClient* client,
                                           const Scenario& sc) {
  if (cfg.model.kind == "reference") return make_reference_probe();
  if (cfg.model.kind == "oracle") return oracle_probe();
  if (cfg.model.kind == "never") return never_correct_probe();
  if (!client) throw ConfigError("threshold probe needs a client");
  CompletionParams params;
  params.temperature = cfg.model.temperature;
  params.max_tokens = cfg.model.max_tokens;
  params.n = 1;
  JudgePolicy judge;
  judge.strict_text_match = cfg.strict_text;
  ThresholdProbe p;
  p.rule_induction = [client, sc, params, judge](const FactSet& prefix) {
    Rng rng(0);
    const RenderedQuestion q = render_question(
        prefix, TaskKind::RuleInduction, sc, std::nullopt, 0, rng);
    const std::vector<std::string> resp = client->complete(q.prompt, params);
    return grade_response(resp.at(0), q, judge).verdict == Verdict::Correct;
  };
  p.example_inference = [client, sc, params, judge](const FactSet& prefix,
                                                    const Vec& x) {
    Rng rng(0);
    const RenderedQuestion q = render_question(
        prefix, TaskKind::ExampleInference, sc, x, 0, rng);
    const std::vector<std::string> resp = client->complete(q.prompt, params);
    return grade_response(resp.at(0), q, judge).verdict == Verdict::Correct;
  };
  return p;
}

struct ThresholdRunOutput {
  std::vector<ThresholdRecord> records;
  ReportTable table;
};

// Samples cfg.samples tasks with n_facts-long fact streams and probes each
// growing prefix. The first configured scenario is used for rendering.
inline ThresholdRunOutput run_thresholds(const ExperimentConfig& cfg,
                                         ModelClient* client = nullptr) {
  cfg.validate();
  const Scenario sc = resolve_scenario(cfg, cfg.scenarios.front());
  const ThresholdProbe probe = make_threshold_probe(cfg, client, sc);
  Rng root(cfg.seed);
  std::set<std::string> used_rules;
  ThresholdRunOutput out;
  for (int i = 0; i < cfg.samples; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i) + 1);
    const Vec x_t = sample_input(cfg.dim, rng);
    GenerationConstraint gen;
    NeighborhoodTarget target;
    target.test_input = x_t;
    target.epsilon = 0;  // keeps the test input unseen
    gen.target = target;
    const FactSet stream = detail::draw_rule_and_facts(
        cfg.dim, cfg.n_facts, gen, used_rules, rng);
    out.records.push_back(compute_thresholds(probe, stream, x_t, cfg.n_facts));
  }
  out.table = threshold_report(out.records);
  return out;
}

// Arithmetic micro-probes: per operation, `count` single questions.
inline ReportTable run_probes(const std::vector<OpKind>& kinds, int count,
                              ModelClient& client, std::uint64_t seed,
                              const CompletionParams& params = {}) {
  if (count < 1) throw ConfigError("probe count must be positive");
  Rng root(seed);
  ReportTable t;
  t.columns = {"operation", "count", "accuracy"};
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    int correct = 0;
    for (int i = 0; i < count; ++i) {
      Rng rng = root.split((static_cast<std::uint64_t>(k) << 32) ^
                           static_cast<std::uint64_t>(i));
      const ArithmeticProbe probe = render_arithmetic_probe(kinds[k], rng);
      try {
        const std::vector<std::string> resp =
            client.complete(probe.prompt, params);
        if (parse_probe_answer(resp.at(0)) == probe.expected) ++correct;
      } catch (const Error&) {
        // unanswerable or transport failure: counted incorrect
      }
    }
    t.rows.push_back({op_kind_name(kinds[k]), std::to_string(count),
                      detail::format_fixed(
                          static_cast<double>(correct) / count, 4)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// End-to-end convenience
// ---------------------------------------------------------------------------

struct ExperimentRun {
  std::vector<DatasetRecord> dataset;
  std::vector<ResultRecord> results;
  std::vector<TaskResult> task_results;
};

// generate -> client -> evaluate -> aggregate, in one call.
inline ExperimentRun run_experiment(const ExperimentConfig& cfg,
                                    const std::filesystem::path& out_path,
                                    bool resume = false) {
  ExperimentRun run;
  run.dataset = generate_dataset(cfg);
  std::unique_ptr<ModelClient> client;
  const bool needs_client =
      cfg.method.name != "nn" && cfg.method.name != "nn-strict";
  if (needs_client) client = make_client(cfg.model, &run.dataset);
  run.results =
      evaluate_records(run.dataset, client.get(), cfg, out_path, resume);
  run.task_results = to_task_results(run.results);
  return run;
}

}  // namespace mirage

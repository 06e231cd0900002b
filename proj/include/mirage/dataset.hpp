#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mirage/errors.hpp"
#include "mirage/fact.hpp"
#include "mirage/grade.hpp"
#include "mirage/render.hpp"
#include "mirage/rule.hpp"
#include "mirage/types.hpp"

namespace mirage {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Core object serialization
// ---------------------------------------------------------------------------

inline Json rule_to_json(const MetaRule& f) {
  Json j;
  j["kind"] = op_kind_name(f.kind());
  j["dim"] = f.dim();
  j["d"] = f.source();
  j["r"] = f.target();
  switch (f.kind()) {
    case OpKind::Map:
      j["k"] = f.scale();
      j["b"] = f.offset();
      break;
    case OpKind::Pad:
      j["c"] = f.fill();
      break;
    default:
      break;
  }
  return j;
}

inline MetaRule rule_from_json(const Json& j) {
  const OpKind kind = op_kind_from_name(j.at("kind").get<std::string>());
  const int dim = j.at("dim").get<int>();
  const std::vector<int> d = j.at("d").get<std::vector<int>>();
  const std::vector<int> r = j.at("r").get<std::vector<int>>();
  switch (kind) {
    case OpKind::Add: return MetaRule::add(dim, d, r);
    case OpKind::Copy:
      if (d.size() != 1) throw SchemaError("copy rule needs one source");
      return MetaRule::copy(dim, d[0], r);
    case OpKind::Map:
      return MetaRule::map(dim, d, r, j.at("k").get<int>(),
                           j.at("b").get<int>());
    case OpKind::Pad: return MetaRule::pad(dim, r, j.at("c").get<int>());
    case OpKind::Swap: return MetaRule::swap(dim, d, r);
  }
  throw SchemaError("unknown rule kind");
}

inline Json judgment_to_json(const Judgment& j) {
  Json out;
  out["verdict"] = verdict_name(j.verdict);
  out["reason"] = j.reason;
  if (j.counterexample) out["counterexample"] = *j.counterexample;
  if (j.counterexample_string) {
    out["counterexample_string"] = *j.counterexample_string;
  }
  return out;
}

inline Judgment judgment_from_json(const Json& j) {
  Judgment out;
  out.verdict = verdict_from_name(j.at("verdict").get<std::string>());
  out.reason = j.value("reason", std::string());
  if (j.contains("counterexample")) {
    out.counterexample = j.at("counterexample").get<Vec>();
  }
  if (j.contains("counterexample_string")) {
    out.counterexample_string =
        j.at("counterexample_string").get<StrVec>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Task records
// ---------------------------------------------------------------------------

// One generated task: the hidden rule, its rendered facts and prompt, the
// expected answer text, and every knob that produced it.
struct DatasetRecord {
  std::string id;
  Scenario scenario = Scenario::lt();
  TaskKind task = TaskKind::RuleInduction;
  FactSet facts;
  std::vector<std::string> fact_classes;  // per-fact IF/CF/OF, or empty
  std::optional<Vec> test_input;          // required for example inference
  std::vector<Vec> extra_inputs;          // additional graded test points
  std::string prompt;
  std::string expected_text;
  std::vector<std::string> extra_prompts;
  std::vector<std::string> extra_expected;
  std::string aux_prompt;    // secondary prompt (rule-first deduction)
  std::string aux_expected;
  std::optional<int> epsilon;
  std::optional<std::string> fact_class;
  std::optional<int> eta;
  bool eta_unbounded = false;
  int shots = 0;
  std::string method = "io";
  std::uint64_t item_seed = 0;

  int dim() const { return facts.dim(); }
};

inline Json record_to_json(const DatasetRecord& rec) {
  Json j;
  j["record_type"] = "task";
  j["id"] = rec.id;
  j["scenario"] = rec.scenario.label();
  j["task"] = task_kind_name(rec.task);
  j["rule"] = rule_to_json(rec.facts.rule);
  Json facts = Json::array();
  for (const Fact& f : rec.facts.facts) {
    facts.push_back(Json{{"x", f.input}, {"y", f.output}});
  }
  j["facts"] = facts;
  if (rec.facts.perturbed_index) {
    j["perturbed_index"] = *rec.facts.perturbed_index;
  }
  if (!rec.fact_classes.empty()) j["fact_classes"] = rec.fact_classes;
  if (rec.test_input) j["test_input"] = *rec.test_input;
  if (!rec.extra_inputs.empty()) j["extra_inputs"] = rec.extra_inputs;
  j["prompt"] = rec.prompt;
  j["expected_text"] = rec.expected_text;
  if (!rec.extra_prompts.empty()) j["extra_prompts"] = rec.extra_prompts;
  if (!rec.extra_expected.empty()) j["extra_expected"] = rec.extra_expected;
  if (!rec.aux_prompt.empty()) {
    j["aux_prompt"] = rec.aux_prompt;
    j["aux_expected"] = rec.aux_expected;
  }
  if (rec.epsilon) j["epsilon"] = *rec.epsilon;
  if (rec.fact_class) j["fact_class"] = *rec.fact_class;
  if (rec.eta) {
    j["eta"] = *rec.eta;
  } else if (rec.eta_unbounded) {
    j["eta"] = nullptr;
  }
  j["shots"] = rec.shots;
  j["method"] = rec.method;
  j["item_seed"] = rec.item_seed;
  return j;
}

// Parses and revalidates one stored task: the rule must reconstruct, every
// unperturbed fact must satisfy it, the perturbed fact must contradict it,
// and the expected answer must equal what the rule produces today. line is
// used for error messages only.
inline DatasetRecord record_from_json(const Json& j, std::size_t line = 0) {
  auto fail = [line](const std::string& msg) -> SchemaError {
    return line > 0 ? SchemaError(msg, line) : SchemaError(msg);
  };
  DatasetRecord rec;
  try {
    if (j.value("record_type", std::string("task")) != "task") {
      throw fail("record_type is not 'task'");
    }
    rec.id = j.at("id").get<std::string>();
    if (rec.id.empty()) throw fail("empty id");
    rec.scenario = scenario_from_label(j.at("scenario").get<std::string>());
    rec.task = task_kind_from_name(j.at("task").get<std::string>());
    rec.facts.rule = rule_from_json(j.at("rule"));
    for (const Json& fj : j.at("facts")) {
      Fact f;
      f.input = fj.at("x").get<Vec>();
      f.output = fj.at("y").get<Vec>();
      rec.facts.facts.push_back(std::move(f));
    }
    if (rec.facts.facts.empty()) throw fail("record has no facts");
    if (j.contains("perturbed_index")) {
      rec.facts.perturbed_index = j.at("perturbed_index").get<int>();
    }
    if (j.contains("fact_classes")) {
      rec.fact_classes = j.at("fact_classes").get<std::vector<std::string>>();
    }
    if (j.contains("test_input")) rec.test_input = j.at("test_input").get<Vec>();
    if (j.contains("extra_inputs")) {
      rec.extra_inputs = j.at("extra_inputs").get<std::vector<Vec>>();
    }
    rec.prompt = j.at("prompt").get<std::string>();
    rec.expected_text = j.at("expected_text").get<std::string>();
    if (j.contains("extra_prompts")) {
      rec.extra_prompts = j.at("extra_prompts").get<std::vector<std::string>>();
    }
    if (j.contains("extra_expected")) {
      rec.extra_expected =
          j.at("extra_expected").get<std::vector<std::string>>();
    }
    rec.aux_prompt = j.value("aux_prompt", std::string());
    rec.aux_expected = j.value("aux_expected", std::string());
    if (j.contains("epsilon")) rec.epsilon = j.at("epsilon").get<int>();
    if (j.contains("fact_class")) {
      rec.fact_class = j.at("fact_class").get<std::string>();
    }
    if (j.contains("eta")) {
      if (j.at("eta").is_null()) {
        rec.eta_unbounded = true;
      } else {
        rec.eta = j.at("eta").get<int>();
      }
    }
    rec.shots = j.value("shots", 0);
    rec.method = j.value("method", std::string("io"));
    rec.item_seed = j.value("item_seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed task record: ") + e.what());
  } catch (const Error& e) {
    throw fail(e.what());
  }

  // Semantic revalidation.
  const MetaRule& rule = rec.facts.rule;
  for (std::size_t i = 0; i < rec.facts.facts.size(); ++i) {
    const Fact& f = rec.facts.facts[i];
    if (!is_digit_vector(f.input) ||
        static_cast<int>(f.input.size()) != rule.dim()) {
      throw fail("fact " + std::to_string(i) + ": input is not a digit vector" +
                 " of the rule dimension");
    }
    const bool perturbed = rec.facts.perturbed_index &&
                           *rec.facts.perturbed_index == static_cast<int>(i);
    const Vec want = rule.apply(f.input);
    if (!perturbed && f.output != want) {
      throw fail("fact " + std::to_string(i) +
                 ": output contradicts the rule");
    }
    if (perturbed && f.output == want) {
      throw fail("fact " + std::to_string(i) +
                 ": marked perturbed but satisfies the rule");
    }
  }
  if (!rec.fact_classes.empty() &&
      rec.fact_classes.size() != rec.facts.facts.size()) {
    throw fail("fact_classes cardinality mismatch");
  }
  for (const std::string& c : rec.fact_classes) {
    fact_class_from_name(c);  // throws on unknown labels
  }
  if (rec.prompt.empty()) throw fail("empty prompt");
  if (rec.task == TaskKind::ExampleInference && !rec.test_input) {
    throw fail("example-inference record without test_input");
  }
  std::string want_expected;
  if (rec.task == TaskKind::RuleInduction) {
    want_expected = canonical_rule_answer(rule, rec.scenario);
  } else {
    want_expected = canonical_ei_answer(rule, *rec.test_input, rec.scenario);
  }
  if (rec.expected_text != want_expected) {
    throw fail("expected_text does not match the rule's answer");
  }
  if (rec.extra_prompts.size() != rec.extra_inputs.size() ||
      rec.extra_expected.size() != rec.extra_inputs.size()) {
    throw fail("extra point arrays have mismatched lengths");
  }
  for (std::size_t i = 0; i < rec.extra_inputs.size(); ++i) {
    const std::string want_i =
        canonical_ei_answer(rule, rec.extra_inputs[i], rec.scenario);
    if (rec.extra_expected[i] != want_i) {
      throw fail("extra_expected " + std::to_string(i) +
                 " does not match the rule's answer");
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Result records
// ---------------------------------------------------------------------------

// One graded task: raw model responses, the single text the judgment was
// computed from, and the judgment itself, plus everything needed to regrade
// without the dataset file.
struct ResultRecord {
  std::string id;
  std::string scenario_label;
  TaskKind task = TaskKind::RuleInduction;
  MetaRule rule = MetaRule::pad(2, {0}, 1);  // placeholder; always overwritten
  std::optional<Vec> test_input;
  std::string method = "io";
  int shots = 0;
  int n_facts = 0;
  bool perturbed = false;
  std::optional<int> epsilon;
  std::optional<std::string> fact_class;
  std::optional<int> eta;
  bool eta_unbounded = false;
  std::vector<std::string> responses;
  std::string graded_text;  // what the judgment was computed from
  Judgment judgment;
  std::vector<Vec> extra_inputs;
  std::vector<std::string> extra_graded;
  std::vector<Judgment> extra_judgments;
};

inline Json result_to_json(const ResultRecord& r) {
  Json j;
  j["record_type"] = "result";
  j["id"] = r.id;
  j["scenario"] = r.scenario_label;
  j["task"] = task_kind_name(r.task);
  j["rule"] = rule_to_json(r.rule);
  if (r.test_input) j["test_input"] = *r.test_input;
  j["method"] = r.method;
  j["shots"] = r.shots;
  j["n_facts"] = r.n_facts;
  j["perturbed"] = r.perturbed;
  if (r.epsilon) j["epsilon"] = *r.epsilon;
  if (r.fact_class) j["fact_class"] = *r.fact_class;
  if (r.eta) {
    j["eta"] = *r.eta;
  } else if (r.eta_unbounded) {
    j["eta"] = nullptr;
  }
  j["responses"] = r.responses;
  j["graded_text"] = r.graded_text;
  j["judgment"] = judgment_to_json(r.judgment);
  if (!r.extra_inputs.empty()) {
    j["extra_inputs"] = r.extra_inputs;
    j["extra_graded"] = r.extra_graded;
    Json ej = Json::array();
    for (const Judgment& q : r.extra_judgments) ej.push_back(judgment_to_json(q));
    j["extra_judgments"] = ej;
  }
  return j;
}

inline ResultRecord result_from_json(const Json& j, std::size_t line = 0) {
  auto fail = [line](const std::string& msg) -> SchemaError {
    return line > 0 ? SchemaError(msg, line) : SchemaError(msg);
  };
  ResultRecord r;
  try {
    if (j.value("record_type", std::string("result")) != "result") {
      throw fail("record_type is not 'result'");
    }
    r.id = j.at("id").get<std::string>();
    r.scenario_label = j.at("scenario").get<std::string>();
    scenario_from_label(r.scenario_label);  // validates
    r.task = task_kind_from_name(j.at("task").get<std::string>());
    r.rule = rule_from_json(j.at("rule"));
    if (j.contains("test_input")) r.test_input = j.at("test_input").get<Vec>();
    r.method = j.value("method", std::string("io"));
    r.shots = j.value("shots", 0);
    r.n_facts = j.value("n_facts", 0);
    r.perturbed = j.value("perturbed", false);
    if (j.contains("epsilon")) r.epsilon = j.at("epsilon").get<int>();
    if (j.contains("fact_class")) {
      r.fact_class = j.at("fact_class").get<std::string>();
    }
    if (j.contains("eta")) {
      if (j.at("eta").is_null()) {
        r.eta_unbounded = true;
      } else {
        r.eta = j.at("eta").get<int>();
      }
    }
    r.responses = j.at("responses").get<std::vector<std::string>>();
    r.graded_text = j.at("graded_text").get<std::string>();
    r.judgment = judgment_from_json(j.at("judgment"));
    if (j.contains("extra_inputs")) {
      r.extra_inputs = j.at("extra_inputs").get<std::vector<Vec>>();
      r.extra_graded = j.at("extra_graded").get<std::vector<std::string>>();
      for (const Json& q : j.at("extra_judgments")) {
        r.extra_judgments.push_back(judgment_from_json(q));
      }
      if (r.extra_graded.size() != r.extra_inputs.size() ||
          r.extra_judgments.size() != r.extra_inputs.size()) {
        throw fail("extra point arrays have mismatched lengths");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed result record: ") + e.what());
  } catch (const Error& e) {
    throw fail(e.what());
  }
  if (r.task == TaskKind::ExampleInference && !r.test_input) {
    throw fail("example-inference result without test_input");
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSONL files
// ---------------------------------------------------------------------------

// Line-oriented JSON files: the first line is a header object with
// record_type "config", each following line one record. Keys serialize in
// sorted order and records are written in generation order, so identical
// runs produce byte-identical files.

inline void write_jsonl(const std::filesystem::path& path, const Json& header,
                        const std::vector<Json>& lines) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out << header.dump() << '\n';
  for (const Json& j : lines) out << j.dump() << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

inline void append_jsonl_line(const std::filesystem::path& path,
                              const Json& line) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to file: " + path.string());
  out << line.dump() << '\n';
  out.flush();
}

// Reads a JSONL file; header_out (if given) receives the first line, which
// must be a config header. Blank lines are rejected — a truncated trailing
// line raises SchemaError with its line number.
inline std::vector<Json> read_jsonl(const std::filesystem::path& path,
                                    Json* header_out = nullptr,
                                    bool require_header = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path.string());
  std::vector<Json> lines;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw SchemaError("blank line", line_no);
    }
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (line_no == 1 && require_header) {
      if (!j.is_object() ||
          j.value("record_type", std::string()) != "config") {
        throw SchemaError("first line is not a config header", 1);
      }
      if (header_out) *header_out = j;
      continue;
    }
    lines.push_back(std::move(j));
  }
  return lines;
}

// Loads and fully revalidates a task dataset. Duplicate ids are rejected.
inline std::vector<DatasetRecord> load_dataset(
    const std::filesystem::path& path, Json* header_out = nullptr) {
  Json header;
  const std::vector<Json> lines = read_jsonl(path, &header);
  if (header_out) *header_out = header;
  std::vector<DatasetRecord> out;
  std::set<std::string> seen;
  std::size_t line_no = 1;  // header was line 1
  for (const Json& j : lines) {
    ++line_no;
    DatasetRecord rec = record_from_json(j, line_no);
    if (!seen.insert(rec.id).second) {
      throw SchemaError("duplicate id: " + rec.id, line_no);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<ResultRecord> load_results(
    const std::filesystem::path& path, Json* header_out = nullptr,
    bool require_header = true) {
  Json header;
  const std::vector<Json> lines = read_jsonl(path, &header, require_header);
  if (header_out) *header_out = header;
  std::vector<ResultRecord> out;
  std::size_t line_no = require_header ? 1 : 0;
  for (const Json& j : lines) {
    ++line_no;
    out.push_back(result_from_json(j, line_no));
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path,
                          const Json& config,
                          const std::vector<DatasetRecord>& records) {
  Json header = config;
  header["record_type"] = "config";
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const DatasetRecord& r : records) lines.push_back(record_to_json(r));
  write_jsonl(path, header, lines);
}

inline void write_results(const std::filesystem::path& path,
                          const Json& config,
                          const std::vector<ResultRecord>& records) {
  Json header = config;
  header["record_type"] = "config";
  std::vector<Json> lines;
  lines.reserve(records.size());
  for (const ResultRecord& r : records) lines.push_back(result_to_json(r));
  write_jsonl(path, header, lines);
}

}  // namespace mirage

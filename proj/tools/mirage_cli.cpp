// Command-line front end: generate task datasets, evaluate them against a
// model endpoint or a mock, re-score stored results, and print analysis
// tables.
//
// Exit codes: 0 success, 1 configuration/validation errors, 2 transport
// failures.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mirage/mirage.hpp"

namespace {

mirage::ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mirage::ConfigError("cannot read config file: " + path);
  mirage::Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw mirage::ConfigError("config is not valid JSON: " +
                              std::string(e.what()));
  }
  return mirage::config_from_json(j);
}

void write_table(const mirage::ReportTable& table, const std::string& csv_path) {
  if (csv_path.empty()) {
    std::cout << mirage::to_text(table);
    return;
  }
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw mirage::ConfigError("cannot write: " + csv_path);
  out << mirage::to_csv(table);
  std::cout << "wrote " << csv_path << "\n";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

mirage::ExperimentConfig resolve_config(const CommonOpts& c) {
  if (c.config_path.empty()) {
    throw mirage::ConfigError("--config is required");
  }
  mirage::ExperimentConfig cfg = load_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

int cmd_gen(const CommonOpts& common, const std::string& out_path) {
  const mirage::ExperimentConfig cfg = resolve_config(common);
  const std::vector<mirage::DatasetRecord> records =
      mirage::generate_dataset(cfg);
  mirage::write_dataset(out_path, mirage::config_to_json(cfg), records);
  std::cout << "wrote " << records.size() << " tasks to " << out_path << "\n";
  return 0;
}

int cmd_render(const CommonOpts& common, int index) {
  const mirage::ExperimentConfig cfg = resolve_config(common);
  const std::vector<mirage::DatasetRecord> records =
      mirage::generate_dataset(cfg);
  if (index < 0 || index >= static_cast<int>(records.size())) {
    throw mirage::ConfigError("index out of range; dataset has " +
                              std::to_string(records.size()) + " tasks");
  }
  const mirage::DatasetRecord& r = records[index];
  std::cout << "# id: " << r.id << "\n# rule: " << r.facts.rule.id()
            << "\n\n" << r.prompt << "\n\n# expected:\n" << r.expected_text
            << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& data_path,
             const std::string& out_path, bool resume) {
  mirage::ExperimentConfig cfg;
  std::vector<mirage::DatasetRecord> records;
  if (!data_path.empty()) {
    mirage::Json header;
    records = mirage::load_dataset(data_path, &header);
    if (!common.config_path.empty()) {
      cfg = resolve_config(common);
    } else {
      header.erase("record_type");
      cfg = mirage::config_from_json(header);
    }
  } else {
    cfg = resolve_config(common);
    records = mirage::generate_dataset(cfg);
  }
  std::unique_ptr<mirage::ModelClient> client;
  if (cfg.method.name != "nn" && cfg.method.name != "nn-strict") {
    client = mirage::make_client(cfg.model, &records);
  }
  const std::vector<mirage::ResultRecord> results =
      mirage::evaluate_records(records, client.get(), cfg, out_path, resume);
  const std::vector<mirage::TaskResult> tasks = mirage::to_task_results(results);
  std::cout << "graded " << results.size() << " tasks; accuracy "
            << mirage::detail::format_fixed(mirage::accuracy(tasks), 4)
            << "; results in " << out_path << "\n";
  return 0;
}

int cmd_score(const std::string& results_path, bool strict_text,
              bool drop_unparseable, const std::string& csv_path) {
  const std::vector<mirage::ResultRecord> records =
      mirage::load_results(results_path);
  mirage::JudgePolicy policy;
  policy.strict_text_match = strict_text;
  const mirage::ScoreOutcome outcome = mirage::score_results(records, policy);
  const mirage::ReportTable table = mirage::accuracy_report(
      outcome.results, {"scenario", "task"}, drop_unparseable);
  write_table(table, csv_path);
  std::cout << "re-judged " << outcome.results.size() << " tasks; "
            << outcome.changed << " verdicts changed\n";
  return 0;
}

int cmd_report(const std::string& results_path, const std::string& group,
               bool drop_unparseable, const std::string& csv_path) {
  const std::vector<mirage::ResultRecord> records =
      mirage::load_results(results_path);
  const std::vector<mirage::TaskResult> tasks = mirage::to_task_results(records);
  const mirage::ReportTable table =
      mirage::accuracy_report(tasks, split_list(group), drop_unparseable);
  write_table(table, csv_path);
  return 0;
}

int cmd_probe(const CommonOpts& common, const std::string& ops, int count,
              const std::string& csv_path) {
  const mirage::ExperimentConfig cfg = resolve_config(common);
  std::vector<mirage::OpKind> kinds;
  for (const std::string& name : split_list(ops)) {
    kinds.push_back(mirage::op_kind_from_name(name));
  }
  if (kinds.empty()) throw mirage::ConfigError("--ops must name operations");
  std::unique_ptr<mirage::ModelClient> client =
      mirage::make_client(cfg.model, nullptr);
  mirage::CompletionParams params;
  params.temperature = cfg.model.temperature;
  params.max_tokens = cfg.model.max_tokens;
  const mirage::ReportTable table =
      mirage::run_probes(kinds, count, *client, cfg.seed, params);
  write_table(table, csv_path);
  return 0;
}

int cmd_thresholds(const CommonOpts& common, const std::string& csv_path) {
  const mirage::ExperimentConfig cfg = resolve_config(common);
  std::unique_ptr<mirage::ModelClient> client;
  if (cfg.model.kind != "reference" && cfg.model.kind != "oracle" &&
      cfg.model.kind != "never") {
    client = mirage::make_client(cfg.model, nullptr);
  }
  const mirage::ThresholdRunOutput out =
      mirage::run_thresholds(cfg, client.get());
  write_table(out.table, csv_path);
  std::size_t ri_absent = 0, ei_absent = 0;
  for (const mirage::ThresholdRecord& r : out.records) {
    if (!r.induction_threshold) ++ri_absent;
    if (!r.deduction_threshold) ++ei_absent;
  }
  std::cout << out.records.size() << " tasks probed; induction absent "
            << ri_absent << ", deduction absent " << ei_absent << "\n";
  return 0;
}

int cmd_rules(int dim) {
  std::size_t per_kind[5] = {0, 0, 0, 0, 0};
  mirage::enumerate_rules(dim, [&](const mirage::MetaRule& f) {
    ++per_kind[static_cast<int>(f.kind())];
    return true;
  });
  mirage::ReportTable t;
  t.columns = {"operation", "rules"};
  std::size_t total = 0;
  for (mirage::OpKind k : mirage::kAllOpKinds) {
    const std::size_t n = per_kind[static_cast<int>(k)];
    total += n;
    t.rows.push_back({mirage::op_kind_name(k), std::to_string(n)});
  }
  t.rows.push_back({"total", std::to_string(total)});
  std::cout << mirage::to_text(t);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Procedural inductive-reasoning tasks over digit vectors: generation, "
      "model evaluation, grading, and analysis."};
  app.require_subcommand(1);

  CommonOpts common;
  std::string out_path, data_path, results_path, csv_path;
  std::string group = "scenario,task";
  std::string ops = "map,add";
  int index = 0, count = 20, dim = 3;
  bool resume = false, strict_text = false, drop_unparseable = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path,
                    "JSON experiment configuration");
    sub->add_option("--seed", common.seed, "Override the config seed");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a task dataset (JSONL)");
  add_common(gen);
  gen->add_option("--out", out_path, "Output dataset path")->required();

  CLI::App* render =
      app.add_subcommand("render", "Print one generated prompt");
  add_common(render);
  render->add_option("--index", index, "Task index in the generated dataset");

  CLI::App* eval =
      app.add_subcommand("eval", "Evaluate tasks against the configured model");
  add_common(eval);
  eval->add_option("--data", data_path,
                   "Existing dataset (default: generate from config)");
  eval->add_option("--out", out_path, "Results output path")->required();
  eval->add_flag("--resume", resume, "Skip tasks already in <out>.partial");

  CLI::App* score =
      app.add_subcommand("score", "Re-judge stored results from raw text");
  score->add_option("--results", results_path, "Results file")->required();
  score->add_flag("--strict-text", strict_text,
                  "Require the canonical answer text, not just equivalence");
  score->add_flag("--drop-unparseable", drop_unparseable,
                  "Exclude unparseable responses from denominators");
  score->add_option("--csv", csv_path, "Write the table as CSV");

  CLI::App* report = app.add_subcommand("report", "Grouped accuracy table");
  report->add_option("--results", results_path, "Results file")->required();
  report->add_option("--group", group,
                     "Comma list of scenario,task,method,dim,n,perturbed,"
                     "class,epsilon,eta");
  report->add_flag("--drop-unparseable", drop_unparseable,
                   "Exclude unparseable responses from denominators");
  report->add_option("--csv", csv_path, "Write the table as CSV");

  CLI::App* probe =
      app.add_subcommand("probe", "Arithmetic micro-probes for operations");
  add_common(probe);
  probe->add_option("--ops", ops, "Comma list of operations (map, add)");
  probe->add_option("--count", count, "Questions per operation");
  probe->add_option("--csv", csv_path, "Write the table as CSV");

  CLI::App* thresholds = app.add_subcommand(
      "thresholds", "Correctness-threshold distribution over fact prefixes");
  add_common(thresholds);
  thresholds->add_option("--csv", csv_path, "Write the table as CSV");

  CLI::App* rules =
      app.add_subcommand("rules", "Count the rule grammar per operation");
  rules->add_option("--dim", dim, "Vector dimension");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(common, out_path);
    if (render->parsed()) return cmd_render(common, index);
    if (eval->parsed()) return cmd_eval(common, data_path, out_path, resume);
    if (score->parsed()) {
      return cmd_score(results_path, strict_text, drop_unparseable, csv_path);
    }
    if (report->parsed()) {
      return cmd_report(results_path, group, drop_unparseable, csv_path);
    }
    if (probe->parsed()) return cmd_probe(common, ops, count, csv_path);
    if (thresholds->parsed()) return cmd_thresholds(common, csv_path);
    if (rules->parsed()) return cmd_rules(dim);
  } catch (const mirage::TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return 2;
  } catch (const mirage::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

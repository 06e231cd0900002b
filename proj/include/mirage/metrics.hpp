#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mirage/errors.hpp"
#include "mirage/fact.hpp"
#include "mirage/grade.hpp"
#include "mirage/types.hpp"

namespace mirage {

// ---------------------------------------------------------------------------
// Per-task results
// ---------------------------------------------------------------------------

// One graded task, with everything the aggregations group by.
struct TaskResult {
  std::string id;
  std::string rule_id;
  std::string scenario;  // label, e.g. "LT" or "RP:trade"
  std::string task;      // "RI" or "EI"
  std::string method;    // "io", "cot", "sc", "id", "sr", "hr", ...
  int dim = 0;
  int n_facts = 0;
  bool perturbed = false;
  std::optional<int> epsilon;              // neighborhood constraint radius
  std::optional<std::string> fact_class;   // "IF", "CF", or "OF"
  std::optional<int> eta;                  // test region radius
  bool eta_unbounded = false;              // test region is the whole space
  Verdict verdict = Verdict::Unparseable;
  std::string reason;
  Vec test_input;                          // empty for rule-induction tasks
  std::vector<Verdict> extra_verdicts;     // extra test points, in order
};

// ---------------------------------------------------------------------------
// Scalar metrics
// ---------------------------------------------------------------------------

// Fraction of correct verdicts. Unparseable counts as incorrect unless
// drop_unparseable removes those tasks from the denominator entirely.
inline double accuracy(const std::vector<Verdict>& verdicts,
                       bool drop_unparseable = false) {
  std::size_t total = 0, correct = 0;
  for (Verdict v : verdicts) {
    if (drop_unparseable && v == Verdict::Unparseable) continue;
    ++total;
    if (v == Verdict::Correct) ++correct;
  }
  if (total == 0) throw EmptyInput("accuracy over no gradable tasks");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline double accuracy(const std::vector<TaskResult>& results,
                       bool drop_unparseable = false) {
  std::vector<Verdict> v;
  v.reserve(results.size());
  for (const TaskResult& r : results) v.push_back(r.verdict);
  return accuracy(v, drop_unparseable);
}

// Relative accuracy drop (before - after) / before.
inline double change_rate(double before, double after) {
  if (!(before > 0.0)) {
    throw UndefinedCR("change rate undefined at zero baseline accuracy");
  }
  return (before - after) / before;
}

// Display rounding to two decimals, halves up (toward +infinity).
inline double round2_half_up(double x) {
  return std::floor(x * 100.0 + 0.5) / 100.0;
}

// Mean correctness over a task's extra test points.
inline double task_accuracy(const TaskResult& r) {
  if (r.extra_verdicts.empty()) {
    throw EmptyInput("task accuracy needs extra test points");
  }
  std::size_t correct = 0;
  for (Verdict v : r.extra_verdicts) {
    if (v == Verdict::Correct) ++correct;
  }
  return static_cast<double>(correct) /
         static_cast<double>(r.extra_verdicts.size());
}

// Mean, over tasks whose origin point was answered correctly, of the task
// accuracy on the extra points; measures whether one correct answer implies
// command of the whole neighborhood. Undefined when no origin is correct.
inline std::optional<double> try_deductive_density(
    const std::vector<TaskResult>& results) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TaskResult& r : results) {
    if (r.verdict != Verdict::Correct) continue;
    sum += task_accuracy(r);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline double deductive_density(const std::vector<TaskResult>& results) {
  const std::optional<double> d = try_deductive_density(results);
  if (!d) {
    throw UndefinedDensity(
        "density undefined: no task answered correctly at its origin");
  }
  return *d;
}

// ---------------------------------------------------------------------------
// Correctness thresholds
// ---------------------------------------------------------------------------

// Callbacks deciding correctness given only the first k facts. The FactSet
// passed in carries the generating rule, which is the judging standard.
struct ThresholdProbe {
  std::function<bool(const FactSet& prefix)> rule_induction;
  std::function<bool(const FactSet& prefix, const Vec& test_input)>
      example_inference;
};

struct ThresholdRecord {
  std::optional<int> induction_threshold;  // smallest fact count for RI
  std::optional<int> deduction_threshold;  // smallest fact count for EI
  int max_n = 0;
  std::vector<bool> ri_correct;  // ri_correct[k-1]: correct with k facts
  std::vector<bool> ei_correct;
  std::vector<std::string> notes;  // probe failures, recorded as incorrect
};

// Runs the probe on growing prefixes of the fact stream and records the
// smallest count at which each task first becomes correct (absent when it
// never does). Correctness need not be monotone in k; the full per-prefix
// vectors are kept so non-monotone behavior stays visible.
inline ThresholdRecord compute_thresholds(const ThresholdProbe& probe,
                                          const FactSet& stream,
                                          const Vec& test_input, int max_n) {
  if (max_n < 1 || max_n > static_cast<int>(stream.size())) {
    throw ConfigError("threshold probe needs 1 <= max_n <= fact count");
  }
  ThresholdRecord rec;
  rec.max_n = max_n;
  for (int k = 1; k <= max_n; ++k) {
    FactSet prefix;
    prefix.rule = stream.rule;
    prefix.facts.assign(stream.facts.begin(), stream.facts.begin() + k);
    bool ri = false, ei = false;
    try {
      ri = probe.rule_induction(prefix);
    } catch (const Error& e) {
      rec.notes.push_back("k=" + std::to_string(k) + " RI: " + e.what());
    }
    try {
      ei = probe.example_inference(prefix, test_input);
    } catch (const Error& e) {
      rec.notes.push_back("k=" + std::to_string(k) + " EI: " + e.what());
    }
    rec.ri_correct.push_back(ri);
    rec.ei_correct.push_back(ei);
    if (ri && !rec.induction_threshold) rec.induction_threshold = k;
    if (ei && !rec.deduction_threshold) rec.deduction_threshold = k;
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::string format_fixed(double x, int places) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(places);
  os << x;
  std::string s = os.str();
  if (s == "-0" || s.rfind("-0.", 0) == 0) {
    bool all_zero = true;
    for (char c : s) {
      if (c >= '1' && c <= '9') {
        all_zero = false;
        break;
      }
    }
    if (all_zero) s.erase(0, 1);  // normalize -0.00 to 0.00
  }
  return s;
}

inline bool parse_whole_int(std::string_view s, long long& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Orders group-key tuples: numeric fields numerically, others as text.
inline bool key_tuple_less(const std::vector<std::string>& a,
                           const std::vector<std::string>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    long long ai = 0, bi = 0;
    const bool an = parse_whole_int(a[i], ai);
    const bool bn = parse_whole_int(b[i], bi);
    if (an && bn) {
      if (ai != bi) return ai < bi;
    } else {
      if (a[i] != b[i]) return a[i] < b[i];
    }
  }
  return a.size() < b.size();
}

inline std::string group_value(const TaskResult& r, const std::string& key) {
  if (key == "scenario") return r.scenario;
  if (key == "task") return r.task;
  if (key == "method") return r.method;
  if (key == "dim") return std::to_string(r.dim);
  if (key == "n") return std::to_string(r.n_facts);
  if (key == "perturbed") return r.perturbed ? "yes" : "no";
  if (key == "class") return r.fact_class ? *r.fact_class : "-";
  if (key == "epsilon") {
    return r.epsilon ? std::to_string(*r.epsilon) : "-";
  }
  if (key == "eta") {
    if (r.eta_unbounded) return "inf";
    return r.eta ? std::to_string(*r.eta) : "-";
  }
  throw ConfigError("unknown group key: " + key);
}

}  // namespace detail

// Accuracy per group, one row per populated group, with the density column
// filled where the group has extra test points.
inline ReportTable accuracy_report(const std::vector<TaskResult>& results,
                                   const std::vector<std::string>& keys,
                                   bool drop_unparseable = false) {
  std::map<std::vector<std::string>, std::vector<const TaskResult*>,
           bool (*)(const std::vector<std::string>&,
                    const std::vector<std::string>&)>
      groups(&detail::key_tuple_less);
  for (const TaskResult& r : results) {
    std::vector<std::string> key;
    key.reserve(keys.size());
    for (const std::string& k : keys) key.push_back(detail::group_value(r, k));
    groups[key].push_back(&r);
  }
  ReportTable t;
  t.columns = keys;
  t.columns.push_back("tasks");
  t.columns.push_back("accuracy");
  t.columns.push_back("density");
  for (const auto& [key, members] : groups) {
    std::vector<TaskResult> local;
    local.reserve(members.size());
    for (const TaskResult* p : members) local.push_back(*p);
    std::vector<std::string> row = key;
    row.push_back(std::to_string(members.size()));
    double acc;
    try {
      acc = accuracy(local, drop_unparseable);
      row.push_back(detail::format_fixed(acc, 4));
    } catch (const EmptyInput&) {
      row.push_back("-");
    }
    bool any_extra = false;
    for (const TaskResult& r : local) {
      if (!r.extra_verdicts.empty()) {
        any_extra = true;
        break;
      }
    }
    if (any_extra) {
      std::vector<TaskResult> with_extra;
      for (const TaskResult& r : local) {
        if (!r.extra_verdicts.empty()) with_extra.push_back(r);
      }
      const std::optional<double> d = try_deductive_density(with_extra);
      row.push_back(d ? detail::format_fixed(*d, 4) : "-");
    } else {
      row.push_back("-");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Accuracy change between a baseline batch and a treated batch, grouped by
// the same keys; groups present on only one side are omitted.
inline ReportTable change_rate_report(
    const std::vector<TaskResult>& baseline,
    const std::vector<TaskResult>& treated,
    const std::vector<std::string>& keys, bool drop_unparseable = false) {
  auto collect = [&](const std::vector<TaskResult>& rs) {
    std::map<std::vector<std::string>, std::vector<Verdict>,
             bool (*)(const std::vector<std::string>&,
                      const std::vector<std::string>&)>
        g(&detail::key_tuple_less);
    for (const TaskResult& r : rs) {
      std::vector<std::string> key;
      for (const std::string& k : keys) {
        key.push_back(detail::group_value(r, k));
      }
      g[key].push_back(r.verdict);
    }
    return g;
  };
  auto before = collect(baseline);
  auto after = collect(treated);
  ReportTable t;
  t.columns = keys;
  t.columns.push_back("before");
  t.columns.push_back("after");
  t.columns.push_back("change_rate");
  for (const auto& [key, bv] : before) {
    auto it = after.find(key);
    if (it == after.end()) continue;
    std::vector<std::string> row = key;
    double b, a;
    try {
      b = accuracy(bv, drop_unparseable);
      a = accuracy(it->second, drop_unparseable);
    } catch (const EmptyInput&) {
      continue;
    }
    row.push_back(detail::format_fixed(b, 4));
    row.push_back(detail::format_fixed(a, 4));
    try {
      row.push_back(detail::format_fixed(round2_half_up(change_rate(b, a)), 2));
    } catch (const UndefinedCR&) {
      row.push_back("-");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Distribution of correctness thresholds: how many tasks first become
// correct at each fact count, plus the never-correct bucket.
inline ReportTable threshold_report(const std::vector<ThresholdRecord>& recs) {
  if (recs.empty()) throw EmptyInput("threshold report over no records");
  int max_n = 0;
  for (const ThresholdRecord& r : recs) max_n = std::max(max_n, r.max_n);
  ReportTable t;
  t.columns = {"facts", "induction_count", "deduction_count"};
  std::vector<int> ri(max_n + 1, 0), ei(max_n + 1, 0);
  int ri_absent = 0, ei_absent = 0;
  for (const ThresholdRecord& r : recs) {
    if (r.induction_threshold) {
      ++ri[*r.induction_threshold];
    } else {
      ++ri_absent;
    }
    if (r.deduction_threshold) {
      ++ei[*r.deduction_threshold];
    } else {
      ++ei_absent;
    }
  }
  for (int k = 1; k <= max_n; ++k) {
    t.rows.push_back(
        {std::to_string(k), std::to_string(ri[k]), std::to_string(ei[k])});
  }
  t.rows.push_back(
      {"absent", std::to_string(ri_absent), std::to_string(ei_absent)});
  return t;
}

// ---------------------------------------------------------------------------
// Table serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_field(const std::string& s) {
  const bool quote = s.find_first_of(",\"\n\r") != std::string::npos ||
                     (!s.empty() && (s.front() == ' ' || s.back() == ' '));
  if (!quote) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Comma-separated rendering: quoted fields where needed, doubled inner
// quotes, LF line endings, header row first.
inline std::string to_csv(const ReportTable& t) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += detail::csv_field(row[i]);
    }
    out += '\n';
  };
  emit(t.columns);
  for (const auto& row : t.rows) emit(row);
  return out;
}

// Inverse of to_csv (also accepts CRLF). parse_csv(to_csv(t)) reproduces t
// exactly, and to_csv(parse_csv(s)) is byte-identical for canonical s.
inline ReportTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t i = 0;
  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(row);
    row.clear();
    row_has_content = false;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      row_has_content = true;
      ++i;
      continue;
    }
    if (c == ',') {
      end_field();
      row_has_content = true;
      ++i;
      continue;
    }
    if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      ++i;
      continue;
    }
    field += c;
    row_has_content = true;
    ++i;
  }
  if (in_quotes) throw ParseError("unterminated quoted field", text.size());
  if (!field.empty() || !row.empty() || row_has_content) end_row();
  if (rows.empty()) throw EmptyInput("empty table text");
  ReportTable t;
  t.columns = rows.front();
  t.rows.assign(rows.begin() + 1, rows.end());
  return t;
}

// Human-readable aligned rendering.
inline std::string to_text(const ReportTable& t) {
  std::vector<std::size_t> width(t.columns.size(), 0);
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    width[i] = t.columns[i].size();
  }
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size() && i < width.size(); ++i) {
      width[i] = std::max(width[i], row[i].size());
    }
  }
  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += "  ";
      out += row[i];
      if (i + 1 < row.size()) {
        out.append(width[i] - std::min(width[i], row[i].size()), ' ');
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  };
  emit(t.columns);
  for (const auto& row : t.rows) emit(row);
  return out;
}

// ---------------------------------------------------------------------------
// Reference probes
// ---------------------------------------------------------------------------

// Always-correct and never-correct probes, the calibration endpoints for
// threshold runs.
inline ThresholdProbe oracle_probe() {
  ThresholdProbe p;
  p.rule_induction = [](const FactSet&) { return true; };
  p.example_inference = [](const FactSet&, const Vec&) { return true; };
  return p;
}

inline ThresholdProbe never_correct_probe() {
  ThresholdProbe p;
  p.rule_induction = [](const FactSet&) { return false; };
  p.example_inference = [](const FactSet&, const Vec&) { return false; };
  return p;
}

}  // namespace mirage

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mirage/errors.hpp"
#include "mirage/rng.hpp"
#include "mirage/rule.hpp"
#include "mirage/types.hpp"

namespace mirage {

// One observed (input, output) example under a rule.
struct Fact {
  Vec input;
  Vec output;
  bool operator==(const Fact& o) const {
    return input == o.input && output == o.output;
  }
};

// A fact is trivial when it carries no signal about the rule: unchanged
// input, all-zero input, or all-zero output.
inline bool is_trivial_fact(const Fact& f) {
  const auto all_zero = [](const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](std::int64_t c) { return c == 0; });
  };
  return f.input == f.output || all_zero(f.input) || all_zero(f.output);
}

// A filtered set of facts generated under one rule. Invariants established
// by generate_fact_set: inputs pairwise distinct, at most one trivial fact,
// and output = rule.apply(input) for every fact. perturbed_index marks the
// single fact whose output was deliberately corrupted afterwards; all other
// invariants (distinct inputs in particular) still hold for perturbed sets.
struct FactSet {
  MetaRule rule;
  std::vector<Fact> facts;
  std::optional<int> perturbed_index;

  int dim() const { return rule.dim(); }
  std::size_t size() const { return facts.size(); }
};

enum class FactClass { InNeighborhood, CrossNeighborhood, OutNeighborhood };

inline const char* fact_class_name(FactClass c) {
  switch (c) {
    case FactClass::InNeighborhood: return "IF";
    case FactClass::CrossNeighborhood: return "CF";
    case FactClass::OutNeighborhood: return "OF";
  }
  throw Error("fact_class_name: unknown class");
}

inline FactClass fact_class_from_name(std::string_view name) {
  if (name == "IF") return FactClass::InNeighborhood;
  if (name == "CF") return FactClass::CrossNeighborhood;
  if (name == "OF") return FactClass::OutNeighborhood;
  throw SchemaError("unknown fact class: " + std::string(name));
}

enum class DistanceKind { Chebyshev, Euclidean, Manhattan, Minkowski };

struct DistanceMetric {
  DistanceKind kind = DistanceKind::Chebyshev;
  int p = 3;  // Minkowski order

  static DistanceMetric chebyshev() { return {DistanceKind::Chebyshev, 0}; }
  static DistanceMetric euclidean() { return {DistanceKind::Euclidean, 2}; }
  static DistanceMetric manhattan() { return {DistanceKind::Manhattan, 1}; }
  static DistanceMetric minkowski(int p) {
    if (p < 1) throw ConfigError("minkowski order must be >= 1");
    return {DistanceKind::Minkowski, p};
  }

  std::string name() const {
    switch (kind) {
      case DistanceKind::Chebyshev: return "chebyshev";
      case DistanceKind::Euclidean: return "euclidean";
      case DistanceKind::Manhattan: return "manhattan";
      case DistanceKind::Minkowski: return "minkowski" + std::to_string(p);
    }
    throw Error("DistanceMetric::name: unknown kind");
  }
};

inline DistanceMetric distance_metric_from_name(std::string_view name) {
  if (name == "chebyshev") return DistanceMetric::chebyshev();
  if (name == "euclidean") return DistanceMetric::euclidean();
  if (name == "manhattan") return DistanceMetric::manhattan();
  if (name.rfind("minkowski", 0) == 0) {
    const std::string suffix(name.substr(9));
    if (suffix.empty()) return DistanceMetric::minkowski(3);
    return DistanceMetric::minkowski(std::stoi(suffix));
  }
  throw ConfigError("unknown distance metric: " + std::string(name));
}

inline double distance(const Vec& a, const Vec& b, DistanceMetric metric) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("distance: vectors have dimensions " +
                            std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  }
  switch (metric.kind) {
    case DistanceKind::Chebyshev: {
      std::int64_t m = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
      }
      return static_cast<double>(m);
    }
    case DistanceKind::Euclidean: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i] - b[i]);
        s += d * d;
      }
      return std::sqrt(s);
    }
    case DistanceKind::Manhattan: {
      std::int64_t s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      return static_cast<double>(s);
    }
    case DistanceKind::Minkowski: {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::pow(std::abs(static_cast<double>(a[i] - b[i])),
                      static_cast<double>(metric.p));
      }
      return std::pow(s, 1.0 / static_cast<double>(metric.p));
    }
  }
  throw Error("distance: unknown metric kind");
}

inline double euclidean_norm(const Vec& v) {
  double s = 0;
  for (std::int64_t c : v) {
    const double d = static_cast<double>(c);
    s += d * d;
  }
  return std::sqrt(s);
}

// Chebyshev trichotomy of an input against a test point at radius epsilon:
// in-neighborhood when every component is within epsilon, out-of-neighborhood
// when every component is farther than epsilon, cross-neighborhood otherwise.
inline FactClass classify_input(const Vec& x, const Vec& test_input,
                                int epsilon) {
  if (x.size() != test_input.size()) {
    throw DimensionMismatch("classify: dimension mismatch");
  }
  bool all_in = true, all_out = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::int64_t d = std::abs(x[i] - test_input[i]);
    if (d > epsilon) all_in = false;
    if (d <= epsilon) all_out = false;
  }
  if (all_in) return FactClass::InNeighborhood;
  if (all_out) return FactClass::OutNeighborhood;
  return FactClass::CrossNeighborhood;
}

inline FactClass classify_fact(const Fact& f, const Vec& test_input,
                               int epsilon) {
  return classify_input(f.input, test_input, epsilon);
}

// Binary variant for non-Chebyshev metrics: within the metric ball or not.
// The three-way classification is specific to the Chebyshev geometry.
inline FactClass classify_input_metric(const Vec& x, const Vec& test_input,
                                       double epsilon, DistanceMetric metric) {
  if (metric.kind == DistanceKind::Chebyshev) {
    return classify_input(x, test_input, static_cast<int>(epsilon));
  }
  return distance(x, test_input, metric) <= epsilon
             ? FactClass::InNeighborhood
             : FactClass::OutNeighborhood;
}

// Neighborhood-based generation constraint: keep fact inputs in a requested
// class relative to a test input. fact_class absent = only exclude the test
// input itself and annotate classes. metric defaults to Chebyshev; other
// metrics support the in/out classes but not cross-neighborhood.
struct NeighborhoodTarget {
  Vec test_input;
  int epsilon = 1;
  std::optional<FactClass> fact_class;
  DistanceMetric metric = DistanceMetric::chebyshev();
};

struct GenerationConstraint {
  std::optional<NeighborhoodTarget> target;
  int attempt_cap = 10000;  // rejection attempts per fact
};

namespace detail {

// Per-slot candidate values within (or outside) epsilon of the test slot.
inline std::vector<std::int64_t> slot_candidates(std::int64_t center,
                                                 int epsilon, bool inside) {
  std::vector<std::int64_t> out;
  for (std::int64_t v = 0; v < kAlphabetSize; ++v) {
    const bool in = std::abs(v - center) <= epsilon;
    if (in == inside) out.push_back(v);
  }
  return out;
}

}  // namespace detail

// Number of digit vectors in the given class around test_input (Chebyshev).
inline std::uint64_t class_region_size(const Vec& test_input, int epsilon,
                                       FactClass cls) {
  std::uint64_t in_count = 1, out_count = 1, total = 1;
  for (std::int64_t c : test_input) {
    if (!in_digit_range(c)) {
      throw ConfigError("test input component outside 0..9");
    }
    in_count *= detail::slot_candidates(c, epsilon, true).size();
    out_count *= detail::slot_candidates(c, epsilon, false).size();
    total *= kAlphabetSize;
  }
  switch (cls) {
    case FactClass::InNeighborhood: return in_count;
    case FactClass::OutNeighborhood: return out_count;
    case FactClass::CrossNeighborhood: return total - in_count - out_count;
  }
  throw Error("class_region_size: unknown class");
}

inline Vec sample_input(int dim, Rng& rng) {
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = rng.next_int(0, kAlphabetSize - 1);
  return x;
}

namespace detail {

inline void check_target(const NeighborhoodTarget& t, int dim) {
  if (static_cast<int>(t.test_input.size()) != dim) {
    throw ConfigError("test input dimension " +
                      std::to_string(t.test_input.size()) +
                      " does not match rule dimension " + std::to_string(dim));
  }
  if (!is_digit_vector(t.test_input)) {
    throw ConfigError("test input components must be digits 0..9");
  }
  if (t.epsilon < 0) throw ConfigError("epsilon must be non-negative");
  if (t.fact_class && t.metric.kind != DistanceKind::Chebyshev &&
      *t.fact_class == FactClass::CrossNeighborhood) {
    throw ConfigError(
        "cross-neighborhood constraints are defined only for the chebyshev "
        "metric");
  }
}

}  // namespace detail

// Generates n facts under the rule by rejection sampling with filtering:
// inputs pairwise distinct, at most one trivial fact, never equal to the
// constraint's test input, and classified into the requested class when one
// is given. Chebyshev in/out classes are sampled directly per slot (uniform
// over the class region); other cases reject from the full lattice. Throws
// GenerationExhausted when a constraint is infeasible (closed-form region
// count below n) or the per-fact attempt cap is hit.
inline FactSet generate_fact_set(const MetaRule& rule, int n,
                                 const GenerationConstraint& constraint,
                                 Rng& rng) {
  if (n < 1) throw ConfigError("fact count must be positive");
  if (constraint.attempt_cap < 1) throw ConfigError("attempt cap must be positive");
  const int dim = rule.dim();

  // Per-slot candidate pools when a Chebyshev class constraint allows
  // slot-independent sampling; empty otherwise.
  std::vector<std::vector<std::int64_t>> pools;
  bool reject_by_class = false;
  if (constraint.target) {
    detail::check_target(*constraint.target, dim);
    const NeighborhoodTarget& t = *constraint.target;
    if (t.fact_class) {
      if (t.metric.kind == DistanceKind::Chebyshev) {
        const std::uint64_t region = class_region_size(t.test_input, t.epsilon,
                                                       *t.fact_class);
        // The test input itself is always in-neighborhood and excluded.
        const std::uint64_t available =
            *t.fact_class == FactClass::InNeighborhood ? region - 1 : region;
        if (available < static_cast<std::uint64_t>(n)) {
          throw GenerationExhausted(
              "constraint infeasible: class " +
              std::string(fact_class_name(*t.fact_class)) + " at epsilon " +
              std::to_string(t.epsilon) + " holds " +
              std::to_string(available) + " candidate inputs, need " +
              std::to_string(n));
        }
        if (*t.fact_class != FactClass::CrossNeighborhood) {
          const bool inside = *t.fact_class == FactClass::InNeighborhood;
          for (std::int64_t c : t.test_input) {
            pools.push_back(detail::slot_candidates(c, t.epsilon, inside));
          }
        } else {
          reject_by_class = true;
        }
      } else {
        reject_by_class = true;  // metric ball: no closed form, reject
      }
    }
  }

  FactSet fs;
  fs.rule = rule;
  std::set<Vec> seen;
  int trivial_count = 0;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < constraint.attempt_cap; ++attempt) {
      Vec x;
      if (!pools.empty()) {
        x.resize(dim);
        for (int k = 0; k < dim; ++k) {
          x[k] = pools[k][rng.next_below(pools[k].size())];
        }
      } else {
        x = sample_input(dim, rng);
      }
      if (constraint.target) {
        const NeighborhoodTarget& t = *constraint.target;
        if (x == t.test_input) continue;
        if (reject_by_class &&
            classify_input_metric(x, t.test_input,
                                  static_cast<double>(t.epsilon),
                                  t.metric) != *t.fact_class) {
          continue;
        }
      }
      if (seen.count(x)) continue;
      Fact f{x, rule.apply(x)};
      if (is_trivial_fact(f)) {
        if (trivial_count >= 1) continue;
        ++trivial_count;
      }
      seen.insert(x);
      fs.facts.push_back(std::move(f));
      placed = true;
      break;
    }
    if (!placed) {
      throw GenerationExhausted("fact " + std::to_string(i + 1) + " of " +
                                std::to_string(n) + ": no admissible input in " +
                                std::to_string(constraint.attempt_cap) +
                                " attempts");
    }
  }
  return fs;
}

// Classifies each fact input against a test input at radius epsilon.
inline std::vector<FactClass> annotate_classes(const FactSet& fs,
                                               const Vec& test_input,
                                               int epsilon) {
  std::vector<FactClass> out;
  out.reserve(fs.facts.size());
  for (const Fact& f : fs.facts) {
    out.push_back(classify_fact(f, test_input, epsilon));
  }
  return out;
}

// Returns a copy with exactly one corrupted output. Default: one uniformly
// chosen component of one uniformly chosen fact moves to a different digit.
// whole_vector = true instead resamples that fact's entire output to a
// different random digit vector. Inputs are untouched, so every structural
// filter (distinct inputs) still holds; only rule consistency is broken.
inline FactSet perturb_fact_set(const FactSet& fs, Rng& rng,
                                bool whole_vector = false) {
  if (fs.facts.empty()) throw EmptyInput("perturb: empty fact set");
  FactSet out = fs;
  const int fact_index = static_cast<int>(rng.next_below(out.facts.size()));
  Vec& y = out.facts[fact_index].output;
  if (whole_vector) {
    for (;;) {
      const Vec fresh = sample_input(static_cast<int>(y.size()), rng);
      if (fresh != y) {
        y = fresh;
        break;
      }
    }
  } else {
    const std::size_t slot = rng.next_below(y.size());
    for (;;) {
      const std::int64_t v = rng.next_int(0, kAlphabetSize - 1);
      if (v != y[slot]) {
        y[slot] = v;
        break;
      }
    }
  }
  out.perturbed_index = fact_index;
  return out;
}

// Number of digit vectors within Chebyshev radius eta of the origin
// (eta absent = the whole lattice).
inline std::uint64_t ball_size(const Vec& origin, std::optional<int> eta) {
  std::uint64_t total = 1;
  for (std::int64_t c : origin) {
    if (!in_digit_range(c)) throw ConfigError("origin component outside 0..9");
    if (eta) {
      total *= detail::slot_candidates(c, *eta, true).size();
    } else {
      total *= kAlphabetSize;
    }
  }
  return total;
}

// Samples n distinct digit vectors within Chebyshev radius eta of origin
// (eta absent = unbounded), excluding the origin itself and every vector in
// exclusions. Small balls are enumerated and shuffled; large ones use
// rejection sampling. Throws GenerationExhausted when fewer than n vectors
// are available.
inline std::vector<Vec> sample_test_inputs(const Vec& origin,
                                           std::optional<int> eta, int n,
                                           const std::vector<Vec>& exclusions,
                                           Rng& rng) {
  if (n < 1) throw ConfigError("test point count must be positive");
  if (eta && *eta < 0) throw ConfigError("eta must be non-negative");
  const int dim = static_cast<int>(origin.size());

  const auto inside = [&](const Vec& x) {
    if (!eta) return true;
    for (int k = 0; k < dim; ++k) {
      if (std::abs(x[k] - origin[k]) > *eta) return false;
    }
    return true;
  };

  std::set<Vec> excluded(exclusions.begin(), exclusions.end());
  excluded.insert(origin);
  std::uint64_t excluded_in_ball = 0;
  for (const Vec& x : excluded) {
    if (static_cast<int>(x.size()) == dim && inside(x)) ++excluded_in_ball;
  }
  const std::uint64_t available = ball_size(origin, eta) - excluded_in_ball;
  if (available < static_cast<std::uint64_t>(n)) {
    throw GenerationExhausted(
        "test region holds " + std::to_string(available) +
        " candidate points, need " + std::to_string(n));
  }

  constexpr std::uint64_t kEnumerateLimit = 4096;
  std::vector<Vec> out;
  if (ball_size(origin, eta) <= kEnumerateLimit) {
    std::vector<Vec> candidates;
    std::vector<std::vector<std::int64_t>> pools;
    for (std::int64_t c : origin) {
      pools.push_back(eta ? detail::slot_candidates(c, *eta, true)
                          : detail::slot_candidates(c, kAlphabetSize, true));
    }
    Vec x(dim);
    std::vector<std::size_t> idx(dim, 0);
    for (;;) {
      for (int k = 0; k < dim; ++k) x[k] = pools[k][idx[k]];
      if (!excluded.count(x)) candidates.push_back(x);
      int k = dim - 1;
      while (k >= 0 && ++idx[k] == pools[k].size()) idx[k--] = 0;
      if (k < 0) break;
    }
    rng.shuffle(candidates);
    out.assign(candidates.begin(), candidates.begin() + n);
    return out;
  }

  std::set<Vec> chosen;
  const std::uint64_t cap = 10000ull * static_cast<std::uint64_t>(n);
  for (std::uint64_t attempt = 0; attempt < cap && out.size() < static_cast<std::size_t>(n);
       ++attempt) {
    Vec x(dim);
    for (int k = 0; k < dim; ++k) {
      if (eta) {
        const auto pool = detail::slot_candidates(origin[k], *eta, true);
        x[k] = pool[rng.next_below(pool.size())];
      } else {
        x[k] = rng.next_int(0, kAlphabetSize - 1);
      }
    }
    if (excluded.count(x) || chosen.count(x)) continue;
    chosen.insert(x);
    out.push_back(std::move(x));
  }
  if (out.size() < static_cast<std::size_t>(n)) {
    throw GenerationExhausted("test point sampling hit its attempt cap");
  }
  return out;
}

}  // namespace mirage

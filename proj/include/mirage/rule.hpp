#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mirage/errors.hpp"
#include "mirage/rng.hpp"
#include "mirage/types.hpp"

namespace mirage {

// The five atomic vector operations.
enum class OpKind { Add, Copy, Map, Pad, Swap };

inline constexpr OpKind kAllOpKinds[] = {OpKind::Add, OpKind::Copy,
                                         OpKind::Map, OpKind::Pad,
                                         OpKind::Swap};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Add: return "add";
    case OpKind::Copy: return "copy";
    case OpKind::Map: return "map";
    case OpKind::Pad: return "pad";
    case OpKind::Swap: return "swap";
  }
  throw Error("op_kind_name: unknown kind");
}

inline OpKind op_kind_from_name(std::string_view name) {
  if (name == "add") return OpKind::Add;
  if (name == "copy") return OpKind::Copy;
  if (name == "map") return OpKind::Map;
  if (name == "pad") return OpKind::Pad;
  if (name == "swap") return OpKind::Swap;
  throw SchemaError("unknown operation name: " + std::string(name));
}

// A rule f = (operation, source positions, target positions, parameters)
// acting on vectors of a fixed dimension. Construction canonicalizes the
// position lists and rejects configurations outside the grammar, including
// any configuration that would act as the identity.
//
// Semantics of apply (all reads see the original input):
//   Add : y[r] = sum of x[d_i] for every r in targets
//   Copy: y[r] = x[d0] for every r in targets
//   Map : y[r_i] = scale * x[d_i] + offset, pairwise
//   Pad : y[r] = fill for every r in targets
//   Swap: y[r_i] = x[d_i] and y[d_i] = x[r_i], pairwise
// Every position not written keeps its input value.
class MetaRule {
 public:
  // Default: a minimal valid placeholder (pad the first of two slots with 1)
  // so aggregates holding a rule can default-construct before assignment.
  MetaRule() { *this = pad(2, {0}, 1); }

  OpKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const std::vector<int>& source() const { return source_; }
  const std::vector<int>& target() const { return target_; }
  std::int64_t scale() const { return scale_; }    // Map k
  std::int64_t offset() const { return offset_; }  // Map b
  std::int64_t fill() const { return fill_; }      // Pad c

  static MetaRule add(int dim, std::vector<int> source, std::vector<int> target) {
    MetaRule f{Blank{}};
    f.kind_ = OpKind::Add;
    f.dim_ = dim;
    f.source_ = std::move(source);
    f.target_ = std::move(target);
    f.finish();
    return f;
  }

  static MetaRule copy(int dim, int source, std::vector<int> target) {
    MetaRule f{Blank{}};
    f.kind_ = OpKind::Copy;
    f.dim_ = dim;
    f.source_ = {source};
    f.target_ = std::move(target);
    f.finish();
    return f;
  }

  static MetaRule map(int dim, std::vector<int> source, std::vector<int> target,
                      std::int64_t scale, std::int64_t offset) {
    MetaRule f{Blank{}};
    f.kind_ = OpKind::Map;
    f.dim_ = dim;
    f.source_ = std::move(source);
    f.target_ = std::move(target);
    f.scale_ = scale;
    f.offset_ = offset;
    f.finish();
    return f;
  }

  // Map acting on a set of slots in place (source == target).
  static MetaRule map_in_place(int dim, std::vector<int> slots,
                               std::int64_t scale, std::int64_t offset) {
    std::vector<int> target = slots;
    return map(dim, std::move(slots), std::move(target), scale, offset);
  }

  static MetaRule pad(int dim, std::vector<int> target, std::int64_t fill) {
    MetaRule f{Blank{}};
    f.kind_ = OpKind::Pad;
    f.dim_ = dim;
    f.target_ = std::move(target);
    f.fill_ = fill;
    f.finish();
    return f;
  }

  static MetaRule swap(int dim, std::vector<int> source, std::vector<int> target) {
    MetaRule f{Blank{}};
    f.kind_ = OpKind::Swap;
    f.dim_ = dim;
    f.source_ = std::move(source);
    f.target_ = std::move(target);
    f.finish();
    return f;
  }

  Vec apply(const Vec& x) const {
    if (static_cast<int>(x.size()) != dim_) {
      throw DimensionMismatch("apply: input has dimension " +
                              std::to_string(x.size()) + ", rule expects " +
                              std::to_string(dim_));
    }
    Vec y = x;
    switch (kind_) {
      case OpKind::Add: {
        std::int64_t s = 0;
        for (int d : source_) s += x[d];
        for (int r : target_) y[r] = s;
        break;
      }
      case OpKind::Copy: {
        for (int r : target_) y[r] = x[source_[0]];
        break;
      }
      case OpKind::Map: {
        for (std::size_t i = 0; i < source_.size(); ++i) {
          y[target_[i]] = scale_ * x[source_[i]] + offset_;
        }
        break;
      }
      case OpKind::Pad: {
        for (int r : target_) y[r] = fill_;
        break;
      }
      case OpKind::Swap: {
        for (std::size_t i = 0; i < source_.size(); ++i) {
          y[target_[i]] = x[source_[i]];
          y[source_[i]] = x[target_[i]];
        }
        break;
      }
    }
    return y;
  }

  // String interpretation over the a..j alphabet:
  //   Add : concatenation of the source components, in source order
  //   Map : source component repeated `scale` times, then letter(offset)
  //   Pad : fill = 0 deletes (empty string); fill >= 1 writes letter(fill)
  //   Copy/Swap: whole components move unchanged
  StrVec apply_string(const StrVec& x) const {
    if (static_cast<int>(x.size()) != dim_) {
      throw DimensionMismatch("apply_string: input has dimension " +
                              std::to_string(x.size()) + ", rule expects " +
                              std::to_string(dim_));
    }
    check_alphabet(x);
    StrVec y = x;
    switch (kind_) {
      case OpKind::Add: {
        std::string s;
        for (int d : source_) s += x[d];
        for (int r : target_) y[r] = s;
        break;
      }
      case OpKind::Copy: {
        for (int r : target_) y[r] = x[source_[0]];
        break;
      }
      case OpKind::Map: {
        for (std::size_t i = 0; i < source_.size(); ++i) {
          std::string s;
          for (std::int64_t t = 0; t < scale_; ++t) s += x[source_[i]];
          s += digit_to_letter(offset_);
          y[target_[i]] = s;
        }
        break;
      }
      case OpKind::Pad: {
        const std::string s =
            fill_ == 0 ? std::string() : std::string(1, digit_to_letter(fill_));
        for (int r : target_) y[r] = s;
        break;
      }
      case OpKind::Swap: {
        for (std::size_t i = 0; i < source_.size(); ++i) {
          y[target_[i]] = x[source_[i]];
          y[source_[i]] = x[target_[i]];
        }
        break;
      }
    }
    return y;
  }

  bool operator==(const MetaRule& o) const {
    return kind_ == o.kind_ && dim_ == o.dim_ && source_ == o.source_ &&
           target_ == o.target_ && scale_ == o.scale_ && offset_ == o.offset_ &&
           fill_ == o.fill_;
  }
  bool operator!=(const MetaRule& o) const { return !(*this == o); }

  // Canonical ordering: kind, then sources lexicographically, then targets,
  // then parameters. Enumeration emits rules in exactly this order.
  bool operator<(const MetaRule& o) const {
    return key() < o.key();
  }

  // Compact unique text key, e.g. "map|dim=3|d=0,1|r=0,1|k=2|b=3".
  std::string id() const {
    std::string s = op_kind_name(kind_);
    s += "|dim=" + std::to_string(dim_);
    s += "|d=" + join(source_);
    s += "|r=" + join(target_);
    if (kind_ == OpKind::Map) {
      s += "|k=" + std::to_string(scale_) + "|b=" + std::to_string(offset_);
    } else if (kind_ == OpKind::Pad) {
      s += "|c=" + std::to_string(fill_);
    }
    return s;
  }

 private:
  struct Blank {};
  explicit MetaRule(Blank) {}

  static std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(v[i]);
    }
    return s;
  }

  std::tuple<int, std::vector<int>, std::vector<int>, std::int64_t,
             std::int64_t, std::int64_t>
  key() const {
    return {static_cast<int>(kind_), source_, target_, scale_, offset_, fill_};
  }

  void require(bool ok, const std::string& msg) const {
    if (!ok) throw InvalidRule(op_kind_name(kind_) + (": " + msg));
  }

  static bool distinct(const std::vector<int>& v) {
    std::vector<int> s = v;
    std::sort(s.begin(), s.end());
    return std::adjacent_find(s.begin(), s.end()) == s.end();
  }

  void check_positions(const std::vector<int>& v, const char* which) const {
    for (int i : v) {
      require(i >= 0 && i < dim_, std::string(which) + " position " +
                                      std::to_string(i) + " outside [0, " +
                                      std::to_string(dim_) + ")");
    }
    require(distinct(v), std::string(which) + " positions repeat");
  }

  void finish() {
    require(dim_ >= 2, "dimension must be at least 2");
    check_positions(source_, "source");
    check_positions(target_, "target");
    switch (kind_) {
      case OpKind::Add:
        require(source_.size() >= 2, "needs at least two source positions");
        require(!target_.empty(), "needs at least one target position");
        std::sort(source_.begin(), source_.end());
        std::sort(target_.begin(), target_.end());
        break;
      case OpKind::Copy:
        require(source_.size() == 1, "needs exactly one source position");
        require(!target_.empty(), "needs at least one target position");
        std::sort(target_.begin(), target_.end());
        require(!(target_.size() == 1 && target_[0] == source_[0]),
                "copying a position onto itself is the identity");
        break;
      case OpKind::Map: {
        require(!source_.empty(), "needs at least one position pair");
        require(source_.size() == target_.size(),
                "source and target lists must pair up");
        require(scale_ >= 1 && scale_ <= 9, "scale must be in 1..9");
        require(offset_ >= 0 && offset_ <= 9, "offset must be in 0..9");
        sort_pairs();
        require(!(scale_ == 1 && offset_ == 0 && source_ == target_),
                "scale 1 with offset 0 in place is the identity");
        break;
      }
      case OpKind::Pad:
        require(source_.empty(), "takes no source positions");
        require(!target_.empty(), "needs at least one target position");
        require(fill_ >= 0 && fill_ <= 9, "fill must be in 0..9");
        std::sort(target_.begin(), target_.end());
        break;
      case OpKind::Swap: {
        require(!source_.empty(), "needs at least one position pair");
        require(source_.size() == target_.size(),
                "source and target lists must pair up");
        // Each pair is unordered; store as (min, max).
        for (std::size_t i = 0; i < source_.size(); ++i) {
          require(source_[i] != target_[i], "a position cannot swap with itself");
          if (source_[i] > target_[i]) std::swap(source_[i], target_[i]);
        }
        sort_pairs();
        // Pairs must be disjoint overall.
        std::vector<int> all = source_;
        all.insert(all.end(), target_.begin(), target_.end());
        require(distinct(all), "swap pairs overlap");
        break;
      }
    }
  }

  void sort_pairs() {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(source_.size());
    for (std::size_t i = 0; i < source_.size(); ++i) {
      pairs.emplace_back(source_[i], target_[i]);
    }
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      source_[i] = pairs[i].first;
      target_[i] = pairs[i].second;
    }
  }

  OpKind kind_ = OpKind::Add;
  int dim_ = 0;
  std::vector<int> source_, target_;
  std::int64_t scale_ = 0, offset_ = 0, fill_ = 0;
};

inline bool rules_structurally_equal(const MetaRule& a, const MetaRule& b) {
  return a == b;
}

// Smallest constant C with ||f(a) - f(b)|| <= C * ||a - b|| (Euclidean norm)
// guaranteed by the operation's shape:
//   Swap: 1 (permutation; in fact an exact norm equality)
//   Pad : 1 (overwritten slots contribute zero difference)
//   Map : max(1, k) in place; sqrt(1 + k^2) for a general pairing
//   Copy: sqrt(|targets| + 1)
//   Add : sqrt(|targets| * |sources| + 1)
inline double lipschitz_constant(const MetaRule& f) {
  switch (f.kind()) {
    case OpKind::Swap:
    case OpKind::Pad:
      return 1.0;
    case OpKind::Map: {
      const double k = static_cast<double>(f.scale());
      if (f.source() == f.target()) return std::max(1.0, k);
      return std::sqrt(1.0 + k * k);
    }
    case OpKind::Copy:
      return std::sqrt(static_cast<double>(f.target().size()) + 1.0);
    case OpKind::Add:
      return std::sqrt(static_cast<double>(f.target().size()) *
                           static_cast<double>(f.source().size()) +
                       1.0);
  }
  throw Error("lipschitz_constant: unknown kind");
}

namespace detail {

// All non-empty subsets of {0..dim-1} with at least min_size elements, as
// sorted index lists in lexicographic sequence order.
inline void subsets_lex(int dim, int min_size,
                        const std::function<void(const std::vector<int>&)>& yield) {
  std::vector<int> cur;
  const std::function<void(int)> walk = [&](int next) {
    for (int i = next; i < dim; ++i) {
      cur.push_back(i);
      if (static_cast<int>(cur.size()) >= min_size) yield(cur);
      walk(i + 1);
      cur.pop_back();
    }
  };
  walk(0);
}

// All non-empty sets of disjoint unordered pairs over {0..dim-1}; each
// matching is reported as (sources, targets) with pairs sorted by source.
inline std::vector<std::pair<std::vector<int>, std::vector<int>>>
swap_matchings(int dim) {
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  std::vector<int> src, dst;
  std::vector<bool> used(dim, false);
  const std::function<void(int)> walk = [&](int from) {
    for (int a = from; a < dim; ++a) {
      if (used[a]) continue;
      for (int b = a + 1; b < dim; ++b) {
        if (used[b]) continue;
        used[a] = used[b] = true;
        src.push_back(a);
        dst.push_back(b);
        out.emplace_back(src, dst);
        walk(a + 1);
        src.pop_back();
        dst.pop_back();
        used[a] = used[b] = false;
      }
    }
  };
  walk(0);
  // Emit in canonical (sources, targets) order.
  std::sort(out.begin(), out.end());
  return out;
}

inline const std::vector<std::pair<std::vector<int>, std::vector<int>>>&
cached_swap_matchings(int dim) {
  static std::mutex mu;
  static std::map<int, std::vector<std::pair<std::vector<int>, std::vector<int>>>>
      cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(dim);
  if (it == cache.end()) it = cache.emplace(dim, swap_matchings(dim)).first;
  return it->second;
}

}  // namespace detail

// Visits every rule of the given dimension exactly once, in canonical order
// (kind, then sources lexicographically, then targets, then parameters).
// Map rules are enumerated in place (source == target): the in-place form is
// the shape the generator samples, it keeps the continuity constant at
// max(1, k), and it avoids aliasing Copy through a cross-slot Map with k=1.
// The visitor returns false to stop early; enumerate_rules returns false if
// it was stopped.
inline bool enumerate_rules(int dim,
                            const std::function<bool(const MetaRule&)>& visit) {
  if (dim < 2 || dim > kMaxDim) {
    throw InvalidRule("enumeration dimension must be in 2.." +
                      std::to_string(kMaxDim));
  }
  bool keep_going = true;
  const auto emit = [&](const MetaRule& f) {
    if (!visit(f)) keep_going = false;
  };

  // Add: sources of size >= 2, targets of size >= 1.
  detail::subsets_lex(dim, 2, [&](const std::vector<int>& d) {
    if (!keep_going) return;
    detail::subsets_lex(dim, 1, [&](const std::vector<int>& r) {
      if (!keep_going) return;
      emit(MetaRule::add(dim, d, r));
    });
  });
  if (!keep_going) return false;

  // Copy: one source, targets of size >= 1, excluding the identity.
  for (int d0 = 0; d0 < dim && keep_going; ++d0) {
    detail::subsets_lex(dim, 1, [&](const std::vector<int>& r) {
      if (!keep_going) return;
      if (r.size() == 1 && r[0] == d0) return;  // identity
      emit(MetaRule::copy(dim, d0, r));
    });
  }
  if (!keep_going) return false;

  // Map: in-place slot sets with all (scale, offset) except the identity.
  detail::subsets_lex(dim, 1, [&](const std::vector<int>& s) {
    if (!keep_going) return;
    for (std::int64_t k = 1; k <= 9 && keep_going; ++k) {
      for (std::int64_t b = 0; b <= 9 && keep_going; ++b) {
        if (k == 1 && b == 0) continue;  // identity
        emit(MetaRule::map_in_place(dim, s, k, b));
      }
    }
  });
  if (!keep_going) return false;

  // Pad: targets of size >= 1, every fill value.
  detail::subsets_lex(dim, 1, [&](const std::vector<int>& r) {
    if (!keep_going) return;
    for (std::int64_t c = 0; c <= 9 && keep_going; ++c) {
      emit(MetaRule::pad(dim, r, c));
    }
  });
  if (!keep_going) return false;

  // Swap: every non-empty disjoint pairing.
  for (const auto& [d, r] : detail::cached_swap_matchings(dim)) {
    if (!keep_going) break;
    emit(MetaRule::swap(dim, d, r));
  }
  return keep_going;
}

inline std::vector<MetaRule> enumerate_all_rules(int dim) {
  std::vector<MetaRule> out;
  enumerate_rules(dim, [&](const MetaRule& f) {
    out.push_back(f);
    return true;
  });
  return out;
}

inline std::uint64_t count_rules(int dim) {
  std::uint64_t n = 0;
  enumerate_rules(dim, [&](const MetaRule&) {
    ++n;
    return true;
  });
  return n;
}

namespace detail {

// Uniform non-empty subset of {0..dim-1} with at least min_size elements,
// drawn by mask rejection (uniform over qualifying subsets).
inline std::vector<int> random_subset(int dim, int min_size, Rng& rng) {
  for (;;) {
    const std::uint64_t mask = rng.next_below(std::uint64_t(1) << dim);
    std::vector<int> out;
    for (int i = 0; i < dim; ++i) {
      if (mask >> i & 1) out.push_back(i);
    }
    if (static_cast<int>(out.size()) >= min_size) return out;
  }
}

}  // namespace detail

// Uniformly samples an operation kind, then a uniform valid configuration of
// that kind (Map in place, matching enumeration). Identity configurations are
// rejected and resampled.
inline MetaRule sample_rule(int dim, Rng& rng) {
  if (dim < 2 || dim > kMaxDim) {
    throw InvalidRule("sampling dimension must be in 2.." +
                      std::to_string(kMaxDim));
  }
  constexpr int kAttempts = 64;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const OpKind kind = kAllOpKinds[rng.next_below(5)];
    try {
      switch (kind) {
        case OpKind::Add:
          return MetaRule::add(dim, detail::random_subset(dim, 2, rng),
                               detail::random_subset(dim, 1, rng));
        case OpKind::Copy:
          return MetaRule::copy(dim, static_cast<int>(rng.next_below(dim)),
                                detail::random_subset(dim, 1, rng));
        case OpKind::Map:
          return MetaRule::map_in_place(dim, detail::random_subset(dim, 1, rng),
                                        rng.next_int(1, 9), rng.next_int(0, 9));
        case OpKind::Pad:
          return MetaRule::pad(dim, detail::random_subset(dim, 1, rng),
                               rng.next_int(0, 9));
        case OpKind::Swap: {
          const auto& matchings = detail::cached_swap_matchings(dim);
          const auto& [d, r] = matchings[rng.next_below(matchings.size())];
          return MetaRule::swap(dim, d, r);
        }
      }
    } catch (const InvalidRule&) {
      // Drew an identity configuration; resample.
    }
  }
  throw GenerationExhausted("sample_rule: no valid rule after " +
                            std::to_string(kAttempts) + " attempts");
}

// Policy for semantic rule comparison. Dimensions up to exhaustive_max_dim
// compare over the full digit lattice; larger dimensions use seeded uniform
// probes plus every axis point (one slot set to v, all others zero), which
// pins down each slot's linear behavior.
struct EquivalencePolicy {
  int exhaustive_max_dim = 5;
  int probe_count = 10000;
  std::uint64_t probe_seed = 0x1f2e3d4c5b6a7988ull;
};

namespace detail {

// Visits probe vectors per the policy; stops early when visit returns false.
inline void probe_lattice(int dim, const EquivalencePolicy& policy,
                          const std::function<bool(const Vec&)>& visit) {
  if (dim <= policy.exhaustive_max_dim) {
    Vec x(dim, 0);
    for (;;) {
      if (!visit(x)) return;
      int i = dim - 1;
      while (i >= 0 && x[i] == kAlphabetSize - 1) x[i--] = 0;
      if (i < 0) return;
      ++x[i];
    }
  }
  Vec x(dim, 0);
  for (int slot = 0; slot < dim; ++slot) {
    for (int v = 0; v < kAlphabetSize; ++v) {
      x.assign(dim, 0);
      x[slot] = v;
      if (!visit(x)) return;
    }
  }
  Rng rng(policy.probe_seed);
  for (int i = 0; i < policy.probe_count; ++i) {
    for (int j = 0; j < dim; ++j) x[j] = rng.next_int(0, kAlphabetSize - 1);
    if (!visit(x)) return;
  }
}

}  // namespace detail

// True when the two rules produce the same output on every probed digit
// vector. F and G may be any types exposing apply(Vec) -> Vec (rules or
// parsed model rules). On disagreement, *counterexample receives a witness.
template <typename F, typename G>
bool semantically_equivalent(const F& f, const G& g, int dim,
                             const EquivalencePolicy& policy = {},
                             Vec* counterexample = nullptr) {
  bool equal = true;
  detail::probe_lattice(dim, policy, [&](const Vec& x) {
    if (f.apply(x) == g.apply(x)) return true;
    equal = false;
    if (counterexample) *counterexample = x;
    return false;
  });
  return equal;
}

// String-interpretation analogue: probes single-letter vectors (the letter
// image of the digit lattice). Types must expose apply_string(StrVec).
template <typename F, typename G>
bool semantically_equivalent_string(const F& f, const G& g, int dim,
                                    const EquivalencePolicy& policy = {},
                                    StrVec* counterexample = nullptr) {
  bool equal = true;
  detail::probe_lattice(dim, policy, [&](const Vec& x) {
    const StrVec s = digits_to_letters(x);
    if (f.apply_string(s) == g.apply_string(s)) return true;
    equal = false;
    if (counterexample) *counterexample = s;
    return false;
  });
  return equal;
}

}  // namespace mirage

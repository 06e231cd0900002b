#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mirage/errors.hpp"

namespace mirage {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic random stream.
//
// Built on std::mt19937_64 because its output sequence is fixed by the
// standard, so identical seeds give identical streams on every platform.
// Bounded draws use rejection sampling rather than
// std::uniform_int_distribution (whose mapping is implementation-defined),
// keeping generated datasets byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, bound); bound must be positive. Unbiased via rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw Error("next_below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw Error("next_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_below(span));
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool next_bool(double p = 0.5) { return next_double() < p; }

  // Independent stream derived from this stream's seed and a tag.
  // Splitting does not consume state, so split streams are reproducible
  // regardless of how much the parent has been used.
  Rng split(std::uint64_t tag) const { return Rng(mix64(seed_ ^ mix64(tag))); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw EmptyInput("pick: empty vector");
    return v[static_cast<std::size_t>(next_below(v.size()))];
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace mirage

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mirage/errors.hpp"

namespace mirage {

// Numeric vectors use int64 components: inputs are single digits 0..9, but
// transformed outputs (sums, scaled values) and parsed model answers may be
// arbitrarily large integers.
using Vec = std::vector<std::int64_t>;

// String vectors hold components over the lowercase alphabet a..j.
using StrVec = std::vector<std::string>;

inline constexpr int kAlphabetSize = 10;  // digits 0..9 / letters a..j
inline constexpr int kMaxDim = 26;        // positional letters A..Z

inline bool in_digit_range(std::int64_t v) { return v >= 0 && v < kAlphabetSize; }

inline bool is_digit_vector(const Vec& v) {
  for (std::int64_t c : v) {
    if (!in_digit_range(c)) return false;
  }
  return true;
}

inline char digit_to_letter(std::int64_t d) {
  if (!in_digit_range(d)) {
    throw InvalidAlphabet("no letter for value " + std::to_string(d));
  }
  return static_cast<char>('a' + d);
}

inline std::int64_t letter_to_digit(char c) {
  if (c < 'a' || c >= 'a' + kAlphabetSize) {
    throw InvalidAlphabet(std::string("letter outside a..j: '") + c + "'");
  }
  return c - 'a';
}

inline bool is_alphabet_string(const std::string& s) {
  for (char c : s) {
    if (c < 'a' || c >= 'a' + kAlphabetSize) return false;
  }
  return true;
}

inline void check_alphabet(const StrVec& x) {
  for (const std::string& s : x) {
    if (!is_alphabet_string(s)) {
      throw InvalidAlphabet("string component outside a..j: \"" + s + "\"");
    }
  }
}

// Componentwise digit -> letter translation ([3,4,7] -> ["d","e","h"]).
inline StrVec digits_to_letters(const Vec& v) {
  StrVec out;
  out.reserve(v.size());
  for (std::int64_t c : v) out.push_back(std::string(1, digit_to_letter(c)));
  return out;
}

// Inverse of digits_to_letters; requires every component to be one letter.
inline Vec letters_to_digits(const StrVec& s) {
  Vec out;
  out.reserve(s.size());
  for (const std::string& c : s) {
    if (c.size() != 1) {
      throw InvalidAlphabet("expected a single letter, got \"" + c + "\"");
    }
    out.push_back(letter_to_digit(c[0]));
  }
  return out;
}

// Positional variable letter for slot i: 0 -> "A", 1 -> "B", ...
inline std::string var_letter(int i) {
  if (i < 0 || i >= kMaxDim) {
    throw TemplateMismatch("no positional letter for slot " + std::to_string(i));
  }
  return std::string(1, static_cast<char>('A' + i));
}

// First `dim` positional letters concatenated: dim=3 -> "ABC".
inline std::string var_letters(int dim) {
  std::string s;
  for (int i = 0; i < dim; ++i) s += var_letter(i);
  return s;
}

// "[3, 4, 7]"
inline std::string format_vec(const Vec& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(v[i]);
  }
  s += "]";
  return s;
}

// "[d, e, h]"; empty components render as "" so every slot stays visible.
inline std::string format_str_vec(const StrVec& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += v[i].empty() ? "\"\"" : v[i];
  }
  s += "]";
  return s;
}

}  // namespace mirage

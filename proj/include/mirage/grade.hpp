#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mirage/errors.hpp"
#include "mirage/render.hpp"
#include "mirage/rule.hpp"
#include "mirage/types.hpp"

namespace mirage {

// ---------------------------------------------------------------------------
// Expression language
// ---------------------------------------------------------------------------

// A linear integer expression over positional variables:
//   sum of coeff * variable terms plus a constant.
// Canonical form: coefficients merged per variable, zero coefficients
// dropped, constant folded.
struct LinearExpr {
  std::map<int, std::int64_t> coeffs;  // variable index -> coefficient
  std::int64_t constant = 0;

  std::int64_t eval(const Vec& x) const {
    std::int64_t s = constant;
    for (const auto& [var, c] : coeffs) {
      if (var >= static_cast<int>(x.size())) {
        throw DimensionMismatch("expression references slot " +
                                var_letter(var));
      }
      s += c * x[var];
    }
    return s;
  }

  int max_var() const { return coeffs.empty() ? -1 : coeffs.rbegin()->first; }

  // Canonical text: terms in variable order, unit coefficients bare,
  // constant last; "0" for the empty expression.
  std::string text() const {
    std::string s;
    for (const auto& [var, c] : coeffs) {
      if (c == 0) continue;
      const std::int64_t a = c < 0 ? -c : c;
      if (s.empty()) {
        if (c < 0) s += "-";
      } else {
        s += c < 0 ? "-" : "+";
      }
      if (a != 1) s += std::to_string(a) + "*";
      s += var_letter(var);
    }
    if (constant != 0 || s.empty()) {
      if (s.empty()) {
        s = std::to_string(constant);
      } else {
        s += constant < 0 ? "-" + std::to_string(-constant)
                          : "+" + std::to_string(constant);
      }
    }
    return s;
  }
};

namespace detail {

struct Token {
  enum Type { Int, Var, Plus, Minus, Star, LParen, RParen, End } type;
  std::int64_t value = 0;  // Int
  int var = 0;             // Var
  std::size_t pos = 0;
};

// Tokenizes an arithmetic expression; any other character is an error.
inline std::vector<Token> tokenize_expr(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::int64_t v = 0;
      const auto [ptr, ec] =
          std::from_chars(s.data() + i, s.data() + s.size(), v);
      if (ec != std::errc()) throw ParseError("integer out of range", i);
      out.push_back({Token::Int, v, 0, i});
      i = static_cast<std::size_t>(ptr - s.data());
      continue;
    }
    if (c >= 'A' && c <= 'Z') {
      out.push_back({Token::Var, 0, c - 'A', i});
      ++i;
      continue;
    }
    switch (c) {
      case '+': out.push_back({Token::Plus, 0, 0, i}); break;
      case '-': out.push_back({Token::Minus, 0, 0, i}); break;
      case '*': out.push_back({Token::Star, 0, 0, i}); break;
      case '(': out.push_back({Token::LParen, 0, 0, i}); break;
      case ')': out.push_back({Token::RParen, 0, 0, i}); break;
      default:
        throw ParseError(std::string("unexpected character '") + c +
                             "' in expression",
                         i);
    }
    ++i;
  }
  out.push_back({Token::End, 0, 0, s.size()});
  return out;
}

}  // namespace detail

// Parses a linear expression:
//   expr := ["-"] term (("+" | "-") term)*
//   term := int "*" var | int var | var "*" int | var | int
// Whitespace-insensitive. Variables are positional letters; dim bounds which
// letters are legal. Anything nonlinear (var * var, parentheses) is a
// ParseError.
inline LinearExpr parse_expression(std::string_view text, int dim = kMaxDim) {
  const std::vector<detail::Token> toks = detail::tokenize_expr(text);
  using T = detail::Token;
  std::size_t i = 0;
  LinearExpr out;
  if (toks[i].type == T::End) throw ParseError("empty expression", 0);

  bool first = true;
  for (;;) {
    std::int64_t sign = 1;
    if (toks[i].type == T::Plus || toks[i].type == T::Minus) {
      if (first && toks[i].type == T::Plus) {
        throw ParseError("expression starts with '+'", toks[i].pos);
      }
      sign = toks[i].type == T::Minus ? -1 : 1;
      ++i;
    } else if (!first) {
      break;
    }
    first = false;

    // One term: integer factors and at most one variable, joined by '*'
    // (or adjacency for the "2B" form).
    std::int64_t coeff = 1;
    bool saw_int = false;
    std::optional<int> var;
    bool expect_factor = true;
    for (;;) {
      if (expect_factor) {
        if (toks[i].type == T::Int) {
          coeff *= toks[i].value;
          saw_int = true;
          ++i;
        } else if (toks[i].type == T::Var) {
          if (var) throw ParseError("nonlinear term: two variables multiply",
                                    toks[i].pos);
          if (toks[i].var >= dim) {
            throw ParseError("unknown variable " + var_letter(toks[i].var) +
                                 " for this dimension",
                             toks[i].pos);
          }
          var = toks[i].var;
          ++i;
        } else if (toks[i].type == T::LParen || toks[i].type == T::RParen) {
          throw ParseError("parentheses are not linear-form syntax",
                           toks[i].pos);
        } else {
          throw ParseError("expected a number or variable", toks[i].pos);
        }
        expect_factor = false;
        continue;
      }
      if (toks[i].type == T::Star) {
        ++i;
        expect_factor = true;
        continue;
      }
      // Adjacency multiplication: integer immediately followed by a variable.
      if (toks[i].type == T::Var && saw_int && !var) {
        expect_factor = true;
        continue;
      }
      break;
    }
    if (var) {
      out.coeffs[*var] += sign * coeff;
    } else {
      if (!saw_int) throw ParseError("empty term", toks[i].pos);
      out.constant += sign * coeff;
    }
    if (toks[i].type == T::End) break;
  }
  if (toks[i].type != T::End) {
    throw ParseError("trailing input after expression", toks[i].pos);
  }
  for (auto it = out.coeffs.begin(); it != out.coeffs.end();) {
    it = it->second == 0 ? out.coeffs.erase(it) : std::next(it);
  }
  return out;
}

// A general pointwise arithmetic expression over +, -, *, parentheses,
// integer literals, and positional variables, evaluated per probe point.
// This is the grading fallback for scenarios where responders write code-like
// arithmetic that need not be linear.
class PointExpr {
 public:
  static PointExpr parse(std::string_view text, int dim = kMaxDim) {
    PointExpr e;
    const std::vector<detail::Token> toks = detail::tokenize_expr(text);
    std::size_t i = 0;
    e.root_ = e.parse_sum(toks, i, dim, 0);
    if (toks[i].type != detail::Token::End) {
      throw ParseError("trailing input after expression", toks[i].pos);
    }
    return e;
  }

  std::int64_t eval(const Vec& x) const { return eval_node(root_, x); }

  int max_var() const {
    int m = -1;
    for (const Node& n : nodes_) {
      if (n.op == 'v') m = std::max(m, n.var);
    }
    return m;
  }

 private:
  struct Node {
    char op;  // 'i' literal, 'v' variable, '+', '-', '*', 'n' negate
    std::int64_t value = 0;
    int var = 0;
    int lhs = -1, rhs = -1;
  };

  int add(Node n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int parse_sum(const std::vector<detail::Token>& toks, std::size_t& i,
                int dim, int depth) {
    using T = detail::Token;
    int lhs = parse_product(toks, i, dim, depth);
    while (toks[i].type == T::Plus || toks[i].type == T::Minus) {
      const char op = toks[i].type == T::Plus ? '+' : '-';
      ++i;
      const int rhs = parse_product(toks, i, dim, depth);
      lhs = add({op, 0, 0, lhs, rhs});
    }
    return lhs;
  }

  int parse_product(const std::vector<detail::Token>& toks, std::size_t& i,
                    int dim, int depth) {
    using T = detail::Token;
    int lhs = parse_atom(toks, i, dim, depth);
    for (;;) {
      if (toks[i].type == T::Star) {
        ++i;
        lhs = add({'*', 0, 0, lhs, parse_atom(toks, i, dim, depth)});
        continue;
      }
      // Adjacency multiplication ("2B", "2(A+1)").
      if (toks[i].type == T::Var || toks[i].type == T::LParen) {
        lhs = add({'*', 0, 0, lhs, parse_atom(toks, i, dim, depth)});
        continue;
      }
      return lhs;
    }
  }

  int parse_atom(const std::vector<detail::Token>& toks, std::size_t& i,
                 int dim, int depth) {
    using T = detail::Token;
    if (depth > 128) throw ParseError("expression nests too deeply", toks[i].pos);
    switch (toks[i].type) {
      case T::Int: {
        const std::int64_t v = toks[i].value;
        ++i;
        return add({'i', v, 0, -1, -1});
      }
      case T::Var: {
        if (toks[i].var >= dim) {
          throw ParseError("unknown variable " + var_letter(toks[i].var) +
                               " for this dimension",
                           toks[i].pos);
        }
        const int v = toks[i].var;
        ++i;
        return add({'v', 0, v, -1, -1});
      }
      case T::Minus: {
        ++i;
        return add({'n', 0, 0, parse_atom(toks, i, dim, depth + 1), -1});
      }
      case T::LParen: {
        ++i;
        const int inner = parse_sum(toks, i, dim, depth + 1);
        if (toks[i].type != T::RParen) {
          throw ParseError("missing ')'", toks[i].pos);
        }
        ++i;
        return inner;
      }
      default:
        throw ParseError("expected a number, variable, or '('", toks[i].pos);
    }
  }

  std::int64_t eval_node(int id, const Vec& x) const {
    const Node& n = nodes_[id];
    switch (n.op) {
      case 'i': return n.value;
      case 'v':
        if (n.var >= static_cast<int>(x.size())) {
          throw DimensionMismatch("expression references slot " +
                                  var_letter(n.var));
        }
        return x[n.var];
      case 'n': return -eval_node(n.lhs, x);
      case '+': return eval_node(n.lhs, x) + eval_node(n.rhs, x);
      case '-': return eval_node(n.lhs, x) - eval_node(n.rhs, x);
      case '*': return eval_node(n.lhs, x) * eval_node(n.rhs, x);
    }
    throw Error("PointExpr: corrupt node");
  }

  std::vector<Node> nodes_;
  int root_ = -1;
};

// One slot of a string-interpretation rule: a concatenation of input
// components (uppercase letters) and literal characters (lowercase).
struct StringToken {
  bool is_var = false;
  int var = 0;
  std::string literal;
};

struct StringSlot {
  std::vector<StringToken> tokens;

  std::string eval(const StrVec& x) const {
    std::string s;
    for (const StringToken& t : tokens) {
      if (t.is_var) {
        if (t.var >= static_cast<int>(x.size())) {
          throw DimensionMismatch("slot references component " +
                                  var_letter(t.var));
        }
        s += x[t.var];
      } else {
        s += t.literal;
      }
    }
    return s;
  }

  std::string text() const {
    std::string s;
    for (const StringToken& t : tokens) {
      s += t.is_var ? var_letter(t.var) : t.literal;
    }
    return s.empty() ? "\"\"" : s;
  }
};

// Parses one string-rule slot: uppercase letters are input components,
// lowercase runs are literal characters (a..j only), "" is the empty string.
inline StringSlot parse_string_slot(std::string_view text, int dim) {
  StringSlot slot;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '"') {
      if (i + 1 < text.size() && text[i + 1] == '"') {
        i += 2;  // explicit empty-string marker contributes nothing
        continue;
      }
      throw ParseError("stray quote in string slot", i);
    }
    if (c >= 'A' && c <= 'Z') {
      if (c - 'A' >= dim) {
        throw ParseError("unknown component " + std::string(1, c) +
                             " for this dimension",
                         i);
      }
      slot.tokens.push_back({true, c - 'A', {}});
      ++i;
      continue;
    }
    if (c >= 'a' && c <= 'z') {
      if (c >= 'a' + kAlphabetSize) {
        throw InvalidAlphabet(std::string("literal letter outside a..j: '") +
                              c + "'");
      }
      if (!slot.tokens.empty() && !slot.tokens.back().is_var) {
        slot.tokens.back().literal += c;
      } else {
        slot.tokens.push_back({false, 0, std::string(1, c)});
      }
      ++i;
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c +
                         "' in string slot",
                     i);
  }
  return slot;
}

// ---------------------------------------------------------------------------
// Parsed rules and answers
// ---------------------------------------------------------------------------

struct NumericSlot {
  std::optional<LinearExpr> linear;
  std::shared_ptr<const PointExpr> general;  // fallback when not linear
  std::string raw;

  std::int64_t eval(const Vec& x) const {
    if (linear) return linear->eval(x);
    if (general) return general->eval(x);
    throw Error("NumericSlot: empty");
  }

  std::string text() const { return linear ? linear->text() : raw; }
};

// A rule as extracted from a free-text response: one expression per output
// slot, numeric or string-interpretation. Exposes the same apply interface
// as MetaRule so the semantic-equivalence probe works across both.
struct ParsedRule {
  int dim = 0;
  bool string_mode = false;
  std::vector<NumericSlot> slots;
  std::vector<StringSlot> string_slots;

  Vec apply(const Vec& x) const {
    if (string_mode) throw Error("apply: rule is in string mode");
    if (static_cast<int>(x.size()) != dim) {
      throw DimensionMismatch("apply: dimension mismatch");
    }
    Vec y(dim);
    for (int i = 0; i < dim; ++i) y[i] = slots[i].eval(x);
    return y;
  }

  StrVec apply_string(const StrVec& x) const {
    if (!string_mode) throw Error("apply_string: rule is in numeric mode");
    if (static_cast<int>(x.size()) != dim) {
      throw DimensionMismatch("apply_string: dimension mismatch");
    }
    StrVec y(dim);
    for (int i = 0; i < dim; ++i) y[i] = string_slots[i].eval(x);
    return y;
  }

  // Canonical slot texts joined with ", " (for strict text comparison).
  std::string canonical_text() const {
    std::string s;
    for (int i = 0; i < dim; ++i) {
      if (i) s += ", ";
      s += string_mode ? string_slots[i].text() : slots[i].text();
    }
    return s;
  }
};

// A concrete answer extracted from a free-text response.
struct ParsedAnswer {
  bool string_mode = false;
  Vec values;
  StrVec strings;
};

struct ParsePolicy {
  bool last_stanza_wins = true;   // models often self-correct
  bool pointwise_fallback = true; // non-linear arithmetic allowed in CG slots
};

namespace detail {

inline std::string normalize_response(std::string_view text) {
  std::string s;
  s.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    // Unicode arrows become "->".
    if (text.compare(i, 3, "→") == 0 || text.compare(i, 3, "⇒") == 0) {
      s += "->";
      i += 2;
      continue;
    }
    if (text[i] == '`') continue;  // markdown code fences and inline code
    if (text[i] == '\r') continue;
    s += text[i];
  }
  return s;
}

inline char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

// All occurrences of a lowercase label in the text, case-insensitively;
// returns offsets just past each occurrence.
inline std::vector<std::size_t> find_label(std::string_view text,
                                           std::string_view label) {
  std::vector<std::size_t> out;
  if (text.size() < label.size()) return out;
  for (std::size_t i = 0; i + label.size() <= text.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < label.size(); ++j) {
      if (lower(text[i + j]) != label[j]) {
        match = false;
        break;
      }
    }
    if (match) out.push_back(i + label.size());
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits on a delimiter at parenthesis/bracket depth zero.
inline std::vector<std::string_view> split_top_level(std::string_view s,
                                                     char delim) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (c == delim && depth == 0) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  out.push_back(s.substr(start));
  return out;
}

// Content of the first bracketed [...] group at or after `from`; npos pair
// when absent.
inline std::optional<std::string_view> first_bracket_group(
    std::string_view text, std::size_t from) {
  const std::size_t open = text.find('[', from);
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '[') ++depth;
    if (text[i] == ']') {
      --depth;
      if (depth == 0) return text.substr(open + 1, i - open - 1);
    }
  }
  return std::nullopt;
}

// Strips trailing lowercase noun words ("tables", "math classes") and an
// optional leading "and" from a real-world-problem slot segment, leaving the
// expression text.
inline std::string_view strip_rp_segment(std::string_view seg) {
  seg = trim(seg);
  if (seg.size() >= 4 && seg.compare(0, 4, "and ") == 0) {
    seg = trim(seg.substr(4));
  }
  for (;;) {
    seg = trim(seg);
    if (seg.empty()) return seg;
    std::size_t i = seg.size();
    while (i > 0 && seg[i - 1] >= 'a' && seg[i - 1] <= 'z') --i;
    // A trailing lowercase word preceded by a space (or making up a word
    // boundary) is a noun; bare lowercase letters inside expressions do not
    // occur in numeric slots.
    if (i == seg.size()) return seg;
    if (i > 0 && !std::isspace(static_cast<unsigned char>(seg[i - 1]))) {
      return seg;
    }
    seg = seg.substr(0, i);
  }
}

inline std::string_view rest_of_line(std::string_view text, std::size_t from) {
  const std::size_t e = text.find('\n', from);
  return text.substr(from, e == std::string_view::npos ? std::string_view::npos
                                                       : e - from);
}

}  // namespace detail

// Extracts the rule stanza from a free-text response and parses it into a
// ParsedRule for the scenario's surface syntax. Throws FormatError when no
// stanza is present, ArityError on a slot-count mismatch, and ParseError /
// InvalidAlphabet on malformed slot expressions.
inline ParsedRule parse_rule_response(std::string_view response,
                                      const Scenario& scenario, int dim,
                                      const ParsePolicy& policy = {}) {
  if (dim < 2 || dim > kMaxDim) throw ConfigError("dimension out of range");
  const std::string text = detail::normalize_response(response);
  const std::string_view tv = text;

  // Candidate stanza start offsets, in the order they should be tried.
  std::vector<std::size_t> labels = detail::find_label(tv, "rule:");
  if (labels.empty()) {
    // RP and CG responses sometimes omit the label; fall back to scanning
    // the whole text for their structural markers.
    if (scenario.kind == ScenarioKind::RealWorldProblem ||
        scenario.kind == ScenarioKind::CodeGeneration) {
      labels.push_back(0);
    } else {
      throw FormatError("no \"Rule:\" stanza in response");
    }
  }
  if (policy.last_stanza_wins) {
    std::reverse(labels.begin(), labels.end());
  }

  std::optional<ParseError> first_error;
  for (const std::size_t at : labels) {
    try {
      std::vector<std::string_view> segments;
      switch (scenario.kind) {
        case ScenarioKind::ListTransformation:
        case ScenarioKind::StringTransformation: {
          const std::size_t arrow = tv.find("->", at);
          if (arrow == std::string_view::npos) {
            throw ParseError("no \"->\" after rule label", at);
          }
          // A bracketed slot list on the arrow's own line wins; otherwise
          // the rest of that line is the slot list.
          const std::string_view line = detail::rest_of_line(tv, arrow + 2);
          std::optional<std::string_view> group =
              detail::first_bracket_group(line, 0);
          std::string_view rhs;
          if (group) {
            rhs = *group;
          } else {
            rhs = detail::trim(line);
          }
          if (detail::trim(rhs).empty()) {
            throw ParseError("empty rule right-hand side", arrow);
          }
          segments = detail::split_top_level(rhs, ',');
          break;
        }
        case ScenarioKind::RealWorldProblem: {
          // The rule clause ends "..., there are <expr> noun, ...".
          const std::vector<std::size_t> marks =
              detail::find_label(tv.substr(at), "there are");
          if (marks.empty()) {
            throw ParseError("no \"there are\" clause after rule label", at);
          }
          std::string_view tail = tv.substr(at + marks.back());
          tail = detail::rest_of_line(tail, 0);
          tail = detail::trim(tail);
          while (!tail.empty() && (tail.back() == '.' || tail.back() == '!')) {
            tail.remove_suffix(1);
          }
          segments = detail::split_top_level(tail, ',');
          break;
        }
        case ScenarioKind::CodeGeneration: {
          // Prefer the tuple-assignment line inside the function body; fall
          // back to a return line carrying the expressions.
          std::string_view region = tv.substr(at);
          std::optional<std::vector<std::string_view>> found;
          for (std::string_view line : detail::split_top_level(region, '\n')) {
            const std::size_t eq = line.find('=');
            if (eq != std::string_view::npos &&
                (eq + 1 >= line.size() || line[eq + 1] != '=')) {
              // LHS must be a comma list of positional letters.
              bool lhs_ok = true;
              int lhs_count = 0;
              for (std::string_view piece :
                   detail::split_top_level(line.substr(0, eq), ',')) {
                piece = detail::trim(piece);
                if (piece.size() != 1 || piece[0] < 'A' || piece[0] > 'Z') {
                  lhs_ok = false;
                  break;
                }
                ++lhs_count;
              }
              if (lhs_ok && lhs_count == dim) {
                found = detail::split_top_level(
                    detail::trim(line.substr(eq + 1)), ',');
                // Last qualifying assignment wins within the stanza.
              }
            }
          }
          if (!found) {
            for (std::string_view line : detail::split_top_level(region, '\n')) {
              const std::vector<std::size_t> rets =
                  detail::find_label(line, "return");
              if (!rets.empty()) {
                found = detail::split_top_level(
                    detail::trim(line.substr(rets.front())), ',');
              }
            }
          }
          if (!found) {
            throw ParseError("no assignment or return line in rule stanza", at);
          }
          segments = *found;
          break;
        }
      }

      if (static_cast<int>(segments.size()) != dim) {
        throw ArityError("rule has " + std::to_string(segments.size()) +
                         " slots, task dimension is " + std::to_string(dim));
      }

      ParsedRule rule;
      rule.dim = dim;
      rule.string_mode = scenario.kind == ScenarioKind::StringTransformation;
      for (std::string_view seg : segments) {
        if (rule.string_mode) {
          rule.string_slots.push_back(
              parse_string_slot(detail::trim(seg), dim));
          continue;
        }
        std::string_view expr = detail::trim(seg);
        if (scenario.kind == ScenarioKind::RealWorldProblem) {
          expr = detail::strip_rp_segment(expr);
        }
        NumericSlot slot;
        slot.raw = std::string(expr);
        try {
          slot.linear = parse_expression(expr, dim);
        } catch (const ParseError&) {
          if (!(scenario.kind == ScenarioKind::CodeGeneration &&
                policy.pointwise_fallback)) {
            throw;
          }
          slot.general =
              std::make_shared<const PointExpr>(PointExpr::parse(expr, dim));
        }
        rule.slots.push_back(std::move(slot));
      }
      return rule;
    } catch (const ArityError&) {
      throw;
    } catch (const InvalidAlphabet&) {
      throw;
    } catch (const ParseError& e) {
      if (!first_error) first_error = e;
      // Try the next candidate stanza.
    }
  }
  throw *first_error;
}

// Extracts the final-answer stanza and parses the concrete output vector.
inline ParsedAnswer parse_answer_response(std::string_view response,
                                          const Scenario& scenario, int dim,
                                          const ParsePolicy& policy = {}) {
  if (dim < 2 || dim > kMaxDim) throw ConfigError("dimension out of range");
  const std::string text = detail::normalize_response(response);
  const std::string_view tv = text;

  std::vector<std::size_t> labels = detail::find_label(tv, "answer:");
  if (labels.empty()) throw FormatError("no \"Answer:\" stanza in response");
  const std::size_t at = policy.last_stanza_wins ? labels.back() : labels.front();

  ParsedAnswer pa;
  pa.string_mode = scenario.kind == ScenarioKind::StringTransformation;

  if (pa.string_mode) {
    std::optional<std::string_view> group = detail::first_bracket_group(tv, at);
    const std::string_view body =
        group ? *group : detail::trim(detail::rest_of_line(tv, at));
    const std::vector<std::string_view> parts =
        detail::split_top_level(body, ',');
    if (static_cast<int>(parts.size()) != dim) {
      throw ArityError("answer has " + std::to_string(parts.size()) +
                       " components, task dimension is " + std::to_string(dim));
    }
    for (std::string_view part : parts) {
      const StringSlot slot = parse_string_slot(detail::trim(part), dim);
      std::string value;
      for (const StringToken& t : slot.tokens) {
        if (t.is_var) {
          throw ParseError(
              "answers must be concrete strings, found component letter " +
              var_letter(t.var));
        }
        value += t.literal;
      }
      pa.strings.push_back(std::move(value));
    }
    return pa;
  }

  // Numeric scenarios: collect the integers, in order, from the bracketed
  // group when one is present, otherwise from the rest of the answer line.
  // Nouns and prose between numbers are ignored.
  std::string_view body;
  std::optional<std::string_view> group = detail::first_bracket_group(
      detail::rest_of_line(tv, at), 0);
  body = group ? *group : detail::rest_of_line(tv, at);

  for (std::size_t i = 0; i < body.size();) {
    const char c = body[i];
    const bool neg = c == '-' && i + 1 < body.size() &&
                     std::isdigit(static_cast<unsigned char>(body[i + 1]));
    if (std::isdigit(static_cast<unsigned char>(c)) || neg) {
      std::int64_t v = 0;
      const auto [ptr, ec] =
          std::from_chars(body.data() + i, body.data() + body.size(), v);
      if (ec != std::errc()) throw ParseError("integer out of range", i);
      pa.values.push_back(v);
      i = static_cast<std::size_t>(ptr - body.data());
    } else {
      ++i;
    }
  }
  if (static_cast<int>(pa.values.size()) != dim) {
    throw ArityError("answer has " + std::to_string(pa.values.size()) +
                     " numbers, task dimension is " + std::to_string(dim));
  }
  return pa;
}

// Extracts the integer from an arithmetic-probe answer.
inline std::int64_t parse_probe_answer(std::string_view response) {
  const std::string text = detail::normalize_response(response);
  const std::string_view tv = text;
  const std::vector<std::size_t> labels = detail::find_label(tv, "answer:");
  if (labels.empty()) throw FormatError("no \"Answer:\" stanza in response");
  const std::string_view body = detail::rest_of_line(tv, labels.back());
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    const bool neg = c == '-' && i + 1 < body.size() &&
                     std::isdigit(static_cast<unsigned char>(body[i + 1]));
    if (std::isdigit(static_cast<unsigned char>(c)) || neg) {
      std::int64_t v = 0;
      const auto [ptr, ec] =
          std::from_chars(body.data() + i, body.data() + body.size(), v);
      if (ec != std::errc()) throw ParseError("integer out of range", i);
      (void)ptr;
      return v;
    }
  }
  throw ParseError("no integer in answer stanza");
}

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

enum class Verdict { Correct, Incorrect, Unparseable };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::Unparseable: return "unparseable";
  }
  throw Error("verdict_name: unknown verdict");
}

inline Verdict verdict_from_name(std::string_view name) {
  if (name == "correct") return Verdict::Correct;
  if (name == "incorrect") return Verdict::Incorrect;
  if (name == "unparseable") return Verdict::Unparseable;
  throw SchemaError("unknown verdict: " + std::string(name));
}

struct Judgment {
  Verdict verdict = Verdict::Unparseable;
  std::string reason;
  std::optional<Vec> counterexample;
  std::optional<StrVec> counterexample_string;
};

struct JudgePolicy {
  EquivalencePolicy equivalence;
  ParsePolicy parse;
  // Compare canonical slot texts instead of semantic behavior (sensitivity
  // analysis; the default semantic policy is the primary reading).
  bool strict_text_match = false;
};

namespace detail {

inline std::string canonical_slots_text(const MetaRule& truth,
                                        bool string_mode) {
  std::string s;
  for (int i = 0; i < truth.dim(); ++i) {
    if (i) s += ", ";
    s += string_mode ? string_slot_expr(truth, i) : numeric_slot_expr(truth, i);
  }
  return s;
}

}  // namespace detail

// Grades an induced rule against the generating rule: semantically
// equivalent rules are correct, regardless of surface form.
inline Judgment judge_ri(const ParsedRule& parsed, const MetaRule& truth,
                         const JudgePolicy& policy = {}) {
  if (parsed.dim != truth.dim()) {
    throw DimensionMismatch("judge_ri: rule dimensions differ");
  }
  Judgment j;
  if (policy.strict_text_match) {
    const std::string want =
        detail::canonical_slots_text(truth, parsed.string_mode);
    const std::string got = parsed.canonical_text();
    j.verdict = want == got ? Verdict::Correct : Verdict::Incorrect;
    j.reason = j.verdict == Verdict::Correct
                   ? "canonical text matches"
                   : "canonical text \"" + got + "\" differs from \"" + want +
                         "\"";
    return j;
  }
  if (parsed.string_mode) {
    StrVec cx;
    if (semantically_equivalent_string(parsed, truth, truth.dim(),
                                       policy.equivalence, &cx)) {
      j.verdict = Verdict::Correct;
      j.reason = "equivalent on all probed string inputs";
    } else {
      j.verdict = Verdict::Incorrect;
      j.counterexample_string = cx;
      j.reason = "differs at input " + format_str_vec(cx) + ": rule gives " +
                 format_str_vec(parsed.apply_string(cx)) + ", truth gives " +
                 format_str_vec(truth.apply_string(cx));
    }
    return j;
  }
  Vec cx;
  if (semantically_equivalent(parsed, truth, truth.dim(), policy.equivalence,
                              &cx)) {
    j.verdict = Verdict::Correct;
    j.reason = "equivalent on all probed inputs";
  } else {
    j.verdict = Verdict::Incorrect;
    j.counterexample = cx;
    j.reason = "differs at input " + format_vec(cx) + ": rule gives " +
               format_vec(parsed.apply(cx)) + ", truth gives " +
               format_vec(truth.apply(cx));
  }
  return j;
}

// Grades a concrete answer against the rule's output at the test input:
// exact componentwise match.
inline Judgment judge_ei(const ParsedAnswer& answer, const MetaRule& truth,
                         const Vec& test_input) {
  Judgment j;
  if (answer.string_mode) {
    const StrVec want = truth.apply_string(digits_to_letters(test_input));
    if (answer.strings == want) {
      j.verdict = Verdict::Correct;
      j.reason = "exact match";
    } else {
      j.verdict = Verdict::Incorrect;
      j.reason = "answer " + format_str_vec(answer.strings) +
                 " does not match " + format_str_vec(want);
    }
    return j;
  }
  const Vec want = truth.apply(test_input);
  if (answer.values == want) {
    j.verdict = Verdict::Correct;
    j.reason = "exact match";
  } else {
    j.verdict = Verdict::Incorrect;
    j.reason = "answer " + format_vec(answer.values) + " does not match " +
               format_vec(want);
  }
  return j;
}

// Parses and judges a raw response to a rendered question. Parse failures
// become Unparseable verdicts carrying the failure reason.
inline Judgment grade_response(std::string_view response,
                               const RenderedQuestion& q,
                               const JudgePolicy& policy = {}) {
  try {
    if (q.task == TaskKind::RuleInduction) {
      const ParsedRule rule =
          parse_rule_response(response, q.scenario, q.dim, policy.parse);
      return judge_ri(rule, q.rule, policy);
    }
    const ParsedAnswer answer =
        parse_answer_response(response, q.scenario, q.dim, policy.parse);
    return judge_ei(answer, q.rule, *q.test_input);
  } catch (const FormatError& e) {
    return {Verdict::Unparseable, e.what(), std::nullopt, std::nullopt};
  } catch (const ParseError& e) {
    return {Verdict::Unparseable, e.what(), std::nullopt, std::nullopt};
  } catch (const ArityError& e) {
    return {Verdict::Unparseable, e.what(), std::nullopt, std::nullopt};
  } catch (const InvalidAlphabet& e) {
    return {Verdict::Unparseable, e.what(), std::nullopt, std::nullopt};
  }
}

}  // namespace mirage

#pragma once

#include <cmath>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflens/rollout.hpp"
#include "reflens/util.hpp"

namespace reflens::verify {

// Rule-based answer verifier over target-form answer strings.
//
// Scope: exact integers / fractions / finite decimals plus a normalized-text
// fallback. Heavy normalization (radicals, mod, digit sums) happens upstream
// in the extraction step, so gold-vs-candidate comparison sees already
// reduced forms. No computer-algebra simplification here.

enum class AnswerKind { Integer, Rational, Decimal, Symbolic };

inline const char* to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::Integer: return "integer";
    case AnswerKind::Rational: return "rational";
    case AnswerKind::Decimal: return "decimal";
    case AnswerKind::Symbolic: return "symbolic";
  }
  return "?";
}

namespace detail {

using int128 = __int128;

inline int128 abs128(int128 v) { return v < 0 ? -v : v; }

inline int128 gcd128(int128 a, int128 b) {
  a = abs128(a);
  b = abs128(b);
  while (b != 0) {
    int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

// Multiply with overflow detection; int128 headroom covers any answer string
// short enough to parse below (digit counts are capped).
inline bool mul_overflow(int128 a, int128 b, int128* out) {
  if (a == 0 || b == 0) {
    *out = 0;
    return false;
  }
  int128 r = a * b;
  if (r / b != a) return true;
  *out = r;
  return false;
}

constexpr int kMaxDigits = 36;  // fits int128 with room for a 10^k denominator

}  // namespace detail

// Canonical form of one answer string. Numeric kinds carry an exact rational
// in lowest terms (den > 0); Symbolic carries only normalized text. `text`
// is the canonical rendering for every kind, and normalizing it again is a
// fixed point.
struct CanonicalAnswer {
  AnswerKind kind = AnswerKind::Symbolic;
  detail::int128 num = 0;
  detail::int128 den = 1;
  std::string text;

  bool operator==(const CanonicalAnswer& other) const {
    return kind == other.kind && num == other.num && den == other.den && text == other.text;
  }
};

namespace detail {

inline std::string render_int128(int128 v) {
  if (v == 0) return "0";
  bool neg = v < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
  std::string digits;
  while (u > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (neg) digits.push_back('-');
  std::reverse(digits.begin(), digits.end());
  return digits;
}

// Strips presentation-only wrappers: \boxed{...}, surrounding $ / braces,
// thousands separators, leading '+'.
inline std::string strip_formatting(std::string_view raw) {
  std::string s = trim(raw);
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    // \boxed{...} (also tolerates \fbox): replace with balanced inner content.
    for (std::string_view marker : {std::string_view("\\boxed{"), std::string_view("\\fbox{")}) {
      size_t pos = s.find(marker);
      if (pos == std::string::npos) continue;
      size_t open = pos + marker.size() - 1;
      int depth = 0;
      size_t close = std::string::npos;
      for (size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        if (s[i] == '}' && --depth == 0) {
          close = i;
          break;
        }
      }
      if (close == std::string::npos) break;  // unbalanced; leave as-is
      s = s.substr(0, pos) + s.substr(open + 1, close - open - 1) + s.substr(close + 1);
      changed = true;
    }
    // Surrounding $...$ / {...} only when they truly enclose everything:
    // "$5$ or $6$" and "{1} and {2}" are not wrapped.
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$' &&
        s.find('$', 1) == s.size() - 1) {
      s = trim(s.substr(1, s.size() - 2));
      changed = true;
    }
    if (s.size() >= 2 && s.front() == '{' && s.back() == '}') {
      int depth = 0;
      bool enclosing = true;
      for (size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        if (s[i] == '}') --depth;
        if (depth == 0) {
          enclosing = false;
          break;
        }
      }
      if (enclosing) {
        s = trim(s.substr(1, s.size() - 2));
        changed = true;
      }
    }
    std::string t = trim(s);
    if (t.size() != s.size()) {
      s = t;
      changed = true;
    }
  }
  // Thousands separators: drop a comma between a digit and exactly three
  // digits not followed by a fourth ("15,125" but not "(1, 2)").
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) {
      bool group = i + 3 < s.size();
      for (size_t j = i + 1; group && j <= i + 3; ++j)
        if (!std::isdigit(static_cast<unsigned char>(s[j]))) group = false;
      if (group && i + 4 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 4])))
        group = false;
      if (group) continue;
    }
    out.push_back(s[i]);
  }
  if (!out.empty() && out.front() == '+') out.erase(out.begin());
  return trim(out);
}

struct ParsedNumber {
  AnswerKind kind;
  int128 num;
  int128 den;
};

inline std::optional<int128> parse_digits(std::string_view s) {
  if (s.empty() || s.size() > kMaxDigits) return std::nullopt;
  int128 v = 0;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

// Integer: optional sign + digits. Leading zeros are value-irrelevant
// ("0456" means 456; zero-padded last-k-digit answers are common).
inline std::optional<ParsedNumber> parse_integer(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  auto v = parse_digits(s);
  if (!v) return std::nullopt;
  return ParsedNumber{AnswerKind::Integer, neg ? -*v : *v, 1};
}

inline std::optional<ParsedNumber> parse_fraction(std::string_view s) {
  size_t slash = s.find('/');
  if (slash == std::string_view::npos || slash == 0 || slash + 1 >= s.size()) return std::nullopt;
  auto a = parse_integer(s.substr(0, slash));
  auto b = parse_integer(s.substr(slash + 1));
  if (!a || !b || b->num == 0) return std::nullopt;
  int128 num = a->num, den = b->num;
  if (den < 0) {
    num = -num;
    den = -den;
  }
  int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return ParsedNumber{den == 1 ? AnswerKind::Integer : AnswerKind::Rational, num, den};
}

inline std::optional<ParsedNumber> parse_decimal(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  size_t dot = s.find('.');
  if (dot == std::string_view::npos) return std::nullopt;
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part = s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  if (int_part.empty()) int_part = "0";
  if (int_part.size() + frac_part.size() > kMaxDigits) return std::nullopt;
  auto ip = parse_digits(int_part);
  if (!ip) return std::nullopt;
  int128 fp = 0;
  for (char c : frac_part) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    fp = fp * 10 + (c - '0');
  }
  int128 den = 1;
  for (size_t i = 0; i < frac_part.size(); ++i) {
    if (mul_overflow(den, 10, &den)) return std::nullopt;
  }
  int128 num;
  if (mul_overflow(*ip, den, &num)) return std::nullopt;
  num += fp;
  if (neg) num = -num;
  int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return ParsedNumber{AnswerKind::Decimal, num, den};
}

// Canonical decimal text preserves "decimal-ness": trailing zeros dropped but
// at least one fractional digit kept, so normalize(text) round-trips to the
// same kind ("7.0" stays distinct from "7").
inline std::string render_decimal(std::string_view stripped) {
  std::string_view s = stripped;
  bool neg = false;
  if (!s.empty() && s[0] == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  size_t dot = s.find('.');
  std::string int_part(s.substr(0, dot));
  std::string frac_part(s.substr(dot + 1));
  while (int_part.size() > 1 && int_part.front() == '0') int_part.erase(int_part.begin());
  if (int_part.empty()) int_part = "0";
  while (frac_part.size() > 1 && frac_part.back() == '0') frac_part.pop_back();
  if (frac_part.empty()) frac_part = "0";
  std::string out;
  bool all_zero = int_part == "0" && frac_part.find_first_not_of('0') == std::string::npos;
  if (neg && !all_zero) out.push_back('-');
  out += int_part + "." + frac_part;
  return out;
}

inline std::string normalize_symbolic_text(std::string_view stripped) {
  std::string out;
  out.reserve(stripped.size());
  bool pending_space = false;
  for (char c : stripped) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (c == '{' || c == '}') continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

}  // namespace detail

// Total normalization: integers, a/b fractions (reduced), finite decimals,
// and a Symbolic fallback for everything else.
inline CanonicalAnswer normalize(std::string_view answer) {
  std::string stripped = detail::strip_formatting(answer);
  CanonicalAnswer out;
  if (auto n = detail::parse_integer(stripped)) {
    out.kind = AnswerKind::Integer;
    out.num = n->num;
    out.den = 1;
    out.text = detail::render_int128(n->num);
    return out;
  }
  if (auto n = detail::parse_fraction(stripped)) {
    out.kind = n->kind;
    out.num = n->num;
    out.den = n->den;
    out.text = n->den == 1 ? detail::render_int128(n->num)
                           : detail::render_int128(n->num) + "/" + detail::render_int128(n->den);
    return out;
  }
  if (auto n = detail::parse_decimal(stripped)) {
    out.kind = AnswerKind::Decimal;
    out.num = n->num;
    out.den = n->den;
    out.text = detail::render_decimal(stripped);
    return out;
  }
  out.kind = AnswerKind::Symbolic;
  out.text = detail::normalize_symbolic_text(stripped);
  return out;
}

inline std::string render(const CanonicalAnswer& a) { return a.text; }

namespace detail {

inline bool is_numeric(const CanonicalAnswer& a) { return a.kind != AnswerKind::Symbolic; }

inline long double to_long_double(const CanonicalAnswer& a) {
  return static_cast<long double>(a.num) / static_cast<long double>(a.den);
}

inline bool numeric_equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  // Lowest-terms rationals are equal iff identical.
  if (a.num == b.num && a.den == b.den) return true;
  // A 1e-9 absolute tolerance applies only when a decimal literal is
  // involved and only after exact comparison failed, so float-rendered
  // answers are tolerated without admitting wrong integers. Magnitudes are
  // capped where long double spacing would exceed the tolerance.
  if (a.kind != AnswerKind::Decimal && b.kind != AnswerKind::Decimal) return false;
  long double x = to_long_double(a);
  long double y = to_long_double(b);
  if (std::fabs(static_cast<double>(x)) > 1e15L || std::fabs(static_cast<double>(y)) > 1e15L)
    return false;
  return std::fabs(static_cast<double>(x - y)) < 1e-9;
}

}  // namespace detail

inline bool equivalent_canonical(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  bool an = detail::is_numeric(a), bn = detail::is_numeric(b);
  if (an && bn) return detail::numeric_equivalent(a, b);
  if (!an && !bn) return a.text == b.text;
  // Numeric vs symbolic: compare through a numeric reparse of the symbolic
  // side when its normalized text happens to be numeric.
  const CanonicalAnswer& sym = an ? b : a;
  const CanonicalAnswer& num = an ? a : b;
  CanonicalAnswer reparsed = normalize(sym.text);
  if (!detail::is_numeric(reparsed)) return false;
  return detail::numeric_equivalent(num, reparsed);
}

// True iff the two answer strings denote the same target-form answer.
inline bool equivalent(std::string_view a, std::string_view b) {
  return equivalent_canonical(normalize(a), normalize(b));
}

// Reflection type of one consecutive candidate pair, determined solely by
// gold-correctness of each side and value equality of the two.
inline TransitionKind classify_transition(const Candidate& prev, const Candidate& cur,
                                          std::string_view gold) {
  CanonicalAnswer gold_c = normalize(gold);
  bool prev_correct = equivalent_canonical(normalize(prev.value), gold_c);
  bool cur_correct = equivalent_canonical(normalize(cur.value), gold_c);
  if (prev_correct && cur_correct) return TransitionKind::TT;
  if (prev_correct && !cur_correct) return TransitionKind::TF;
  if (!prev_correct && cur_correct) return TransitionKind::FT;
  return equivalent(prev.value, cur.value) ? TransitionKind::FF_SAME : TransitionKind::FF_DIFF;
}

// Pairwise classification over an order-sorted candidate list; n candidates
// yield n-1 transitions.
inline std::vector<Transition> classify_rollout(std::span<const Candidate> candidates,
                                                std::string_view gold) {
  std::vector<Transition> out;
  if (candidates.size() < 2) return out;
  out.reserve(candidates.size() - 1);
  for (size_t i = 1; i < candidates.size(); ++i) {
    Transition t;
    t.from_order = candidates[i - 1].order;
    t.to_order = candidates[i].order;
    t.kind = classify_transition(candidates[i - 1], candidates[i], gold);
    out.push_back(t);
  }
  return out;
}

}  // namespace reflens::verify

#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "reflens/util.hpp"

namespace reflens {

// Lightweight value spotting in free-form model text: boxed expressions and
// standalone numeric tokens (integers, decimals, fractions).

inline std::optional<std::string> find_last_boxed(std::string_view text) {
  size_t pos = text.rfind("\\boxed{");
  if (pos == std::string_view::npos) return std::nullopt;
  size_t open = pos + 6;  // index of '{'
  int depth = 0;
  for (size_t i = open; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0)
      return std::string(text.substr(open + 1, i - open - 1));
  }
  return std::nullopt;
}

namespace detail {

inline bool numeric_char(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '/' || c == '-';
}

}  // namespace detail

// Last maximal numeric-looking token: digits with optional '.', '/', sign.
// Trailing sentence punctuation is not part of the token.
inline std::optional<std::string> last_numeric_token(std::string_view text) {
  size_t end = text.size();
  while (end > 0) {
    while (end > 0 && !std::isdigit(static_cast<unsigned char>(text[end - 1]))) --end;
    if (end == 0) return std::nullopt;
    size_t stop = end;
    size_t start = end;
    while (start > 0 && detail::numeric_char(text[start - 1])) --start;
    // Strip leading '-' only when preceded by nothing or whitespace/'(' so
    // "m-n=5" yields "5", not "-5" wait: keep it simple, drop the sign unless
    // clearly unary.
    std::string_view token = text.substr(start, stop - start);
    while (!token.empty() && (token.front() == '.' || token.front() == '/')) token.remove_prefix(1);
    if (!token.empty() && token.front() == '-') {
      // "-5" after whitespace/'('/'=' is a sign; in "m-n=5" it is an operator.
      bool unary = start == 0 || std::isspace(static_cast<unsigned char>(text[start - 1])) ||
                   text[start - 1] == '(' || text[start - 1] == '=';
      if (!unary) token.remove_prefix(1);
    }
    while (!token.empty() && (token.back() == '.' || token.back() == '/')) token.remove_suffix(1);
    if (!token.empty() && token.find_first_of("0123456789") != std::string_view::npos)
      return std::string(token);
    end = start;
  }
  return std::nullopt;
}

// Final-answer parsing for continuation segments: boxed first, else the last
// nonempty line's trailing value.
inline std::optional<std::string> parse_final_answer(std::string_view text) {
  if (auto boxed = find_last_boxed(text)) return boxed;
  std::string_view rest = text;
  while (!rest.empty()) {
    size_t nl = rest.rfind('\n');
    std::string_view line = nl == std::string_view::npos ? rest : rest.substr(nl + 1);
    if (!trim_view(line).empty()) return last_numeric_token(line);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(0, nl);
  }
  return std::nullopt;
}

inline bool line_has_extractable_value(std::string_view line) {
  return find_last_boxed(line).has_value() || last_numeric_token(line).has_value();
}

}  // namespace reflens

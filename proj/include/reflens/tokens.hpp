#pragma once

#include <cctype>
#include <functional>
#include <string_view>

#include "reflens/rollout.hpp"

namespace reflens {

// Token counting strategy. The toolkit never assumes a specific tokenizer:
// counts are either carried by the corpus (reported-by-api) or computed with
// the approximate mode below, and every report discloses which.
struct TokenCounter {
  CountingMode mode = CountingMode::Approximate;
  std::function<long long(std::string_view)> count_fn;

  long long count(std::string_view text) const { return count_fn(text); }
};

// Whitespace-delimited word count. Additive across line-boundary splits:
// words never span newlines, so count(a) + count(b) == count(a + "\n" + b).
inline long long approximate_token_count(std::string_view text) {
  long long words = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

inline TokenCounter approximate_counter() {
  return TokenCounter{CountingMode::Approximate, approximate_token_count};
}

}  // namespace reflens

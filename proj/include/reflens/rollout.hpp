#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflens/util.hpp"

namespace reflens {

// Shared vocabulary for the whole toolkit. Everything here is an immutable
// value object after construction; operations are pure.

struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;
  std::string source_tag;  // dataset name, e.g. "aime2024"
};

// One line of a chain of thought. Indices are 1-based and contiguous so they
// match the line numbering the extraction prompt sees.
struct Step {
  int index = 0;
  std::string text;  // never contains '\n'

  bool operator==(const Step&) const = default;
};

enum class CountingMode { ReportedByApi, Approximate };

inline const char* to_string(CountingMode m) {
  return m == CountingMode::ReportedByApi ? "reported-by-api" : "approximate";
}

inline std::optional<CountingMode> counting_mode_from_string(std::string_view s) {
  if (s == "reported-by-api") return CountingMode::ReportedByApi;
  if (s == "approximate") return CountingMode::Approximate;
  return std::nullopt;
}

struct TokenCount {
  long long value = 0;
  CountingMode mode = CountingMode::Approximate;
};

struct Rollout {
  std::string id;
  std::string problem_id;
  std::string generator_tag;  // which model produced it
  std::string raw_text;       // carriage returns already stripped
  std::vector<Step> steps;
  std::optional<std::string> final_answer;  // post-thinking answer when known
  std::optional<TokenCount> token_count;

  int line_count() const { return static_cast<int>(steps.size()); }
};

// An extracted (step_index, value) pair, ordered by appearance.
struct Candidate {
  int order = 0;           // appearance rank, 1..n, no gaps
  int step_index = 0;      // line the value appears on
  std::string value;       // answer in the problem's required form
  int same_line_rank = 1;  // left-to-right position when a line has several
};

enum class TransitionKind { TT, FF_SAME, FT, FF_DIFF, TF };

inline const char* to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::TT: return "TT";
    case TransitionKind::FF_SAME: return "FF_SAME";
    case TransitionKind::FT: return "FT";
    case TransitionKind::FF_DIFF: return "FF_DIFF";
    case TransitionKind::TF: return "TF";
  }
  return "?";
}

inline std::optional<TransitionKind> transition_kind_from_string(std::string_view s) {
  if (s == "TT") return TransitionKind::TT;
  if (s == "FF_SAME") return TransitionKind::FF_SAME;
  if (s == "FT") return TransitionKind::FT;
  if (s == "FF_DIFF") return TransitionKind::FF_DIFF;
  if (s == "TF") return TransitionKind::TF;
  return std::nullopt;
}

// The answer does not change across confirmatory transitions.
inline bool is_confirmatory(TransitionKind k) {
  return k == TransitionKind::TT || k == TransitionKind::FF_SAME;
}

inline bool is_corrective(TransitionKind k) { return k == TransitionKind::FT; }

// Correctness-change classification between consecutive candidates.
struct Transition {
  int from_order = 0;
  int to_order = 0;  // always from_order + 1
  TransitionKind kind = TransitionKind::TT;
};

struct EmptyRolloutError : std::invalid_argument {
  EmptyRolloutError() : std::invalid_argument("rollout text is empty") {}
};

// Splits thinking text into 1-indexed steps. '\r' is stripped first so the
// numbering is platform-independent; empty lines keep their step number so
// indices stay aligned with the extraction prompt's line numbering.
// Joining the steps with '\n' reconstructs the CR-stripped input exactly.
inline std::vector<Step> split_into_steps(std::string_view raw_text) {
  if (raw_text.empty()) throw EmptyRolloutError();
  std::string normalized = strip_carriage_returns(raw_text);
  if (normalized.empty()) throw EmptyRolloutError();
  std::vector<std::string> lines = split_lines(normalized);
  std::vector<Step> steps;
  steps.reserve(lines.size());
  for (size_t i = 0; i < lines.size(); ++i)
    steps.push_back(Step{static_cast<int>(i) + 1, std::move(lines[i])});
  return steps;
}

inline Rollout make_rollout(std::string id, std::string problem_id, std::string generator_tag,
                            std::string_view raw_text,
                            std::optional<std::string> final_answer = std::nullopt,
                            std::optional<TokenCount> token_count = std::nullopt) {
  Rollout r;
  r.id = std::move(id);
  r.problem_id = std::move(problem_id);
  r.generator_tag = std::move(generator_tag);
  r.raw_text = strip_carriage_returns(raw_text);
  r.steps = split_into_steps(r.raw_text);
  r.final_answer = std::move(final_answer);
  r.token_count = std::move(token_count);
  return r;
}

// Position of a candidate within its rollout: line index over total lines,
// in (0, 1].
inline double relative_position(const Candidate& candidate, const Rollout& rollout) {
  return static_cast<double>(candidate.step_index) / static_cast<double>(rollout.line_count());
}

inline const Candidate* first_candidate(std::span<const Candidate> candidates) {
  const Candidate* best = nullptr;
  for (const Candidate& c : candidates)
    if (!best || c.order < best->order) best = &c;
  return best;
}

inline const Candidate* final_candidate(std::span<const Candidate> candidates) {
  const Candidate* best = nullptr;
  for (const Candidate& c : candidates)
    if (!best || c.order > best->order) best = &c;
  return best;
}

// Checks the candidate-list invariants: orders 1..n with no gaps, sorted by
// (step_index, same_line_rank), indices within [1, n_lines].
inline bool candidates_well_formed(std::span<const Candidate> candidates, int n_lines) {
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    if (c.order != static_cast<int>(i) + 1) return false;
    if (c.step_index < 1 || c.step_index > n_lines) return false;
    if (c.same_line_rank < 1) return false;
    if (i > 0) {
      const Candidate& p = candidates[i - 1];
      if (c.step_index < p.step_index) return false;
      if (c.step_index == p.step_index && c.same_line_rank != p.same_line_rank + 1) return false;
      if (c.step_index > p.step_index && c.same_line_rank != 1) return false;
    } else if (c.same_line_rank != 1) {
      return false;
    }
  }
  return true;
}

}  // namespace reflens

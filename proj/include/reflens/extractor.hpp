#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reflens/chat_client.hpp"
#include "reflens/prompts.hpp"
#include "reflens/rollout.hpp"
#include "reflens/util.hpp"

namespace reflens::extract {

enum class PromptTemplate { Prompt1, Prompt2 };

inline const char* to_string(PromptTemplate t) {
  return t == PromptTemplate::Prompt1 ? "prompt1" : "prompt2";
}

inline std::string_view system_prompt(PromptTemplate t) {
  return t == PromptTemplate::Prompt1 ? kSystemPrompt1 : kSystemPrompt2;
}

struct ExtractorConfig {
  PromptTemplate prompt_template = PromptTemplate::Prompt1;
  int max_retries = 2;
  std::chrono::seconds request_timeout{120};
  bool deterministic_decoding = true;
};

enum class ExtractionStatus { Ok, Unparseable, Refused };

inline const char* to_string(ExtractionStatus s) {
  switch (s) {
    case ExtractionStatus::Ok: return "ok";
    case ExtractionStatus::Unparseable: return "unparseable";
    case ExtractionStatus::Refused: return "refused";
  }
  return "?";
}

struct ExtractionResult {
  std::string rollout_id;
  std::vector<Candidate> candidates;  // validated when status == Ok
  std::string extractor_tag;          // "<model>/<template>/<decoding>"
  ExtractionStatus status = ExtractionStatus::Unparseable;
  int attempts = 0;
};

// System prompt plus a user message laying out the problem statement and the
// rollout as "index: text" lines.
inline std::vector<ChatMessage> build_extraction_prompt(const Problem& problem,
                                                        const Rollout& rollout,
                                                        PromptTemplate template_choice) {
  std::string user;
  user += "Analyze the following problem and its model solution.\n\n";
  user += "----------------------------------------\n";
  user += "Below is the problem statement followed by the line-numbered model solution:\n";
  user += "----------------------------------------\n\n";
  user += "Problem statement:\n";
  user += problem.statement;
  user += "\nModel solution:\n";
  for (const Step& step : rollout.steps) {
    user += std::to_string(step.index);
    user += ": ";
    user += step.text;
    user += '\n';
  }
  return {ChatMessage{"system", std::string(system_prompt(template_choice))},
          ChatMessage{"user", user}};
}

enum class ReplyParseStatus { Ok, Unparseable, OutOfRange, NonMonotonic };

inline const char* to_string(ReplyParseStatus s) {
  switch (s) {
    case ReplyParseStatus::Ok: return "ok";
    case ReplyParseStatus::Unparseable: return "unparseable";
    case ReplyParseStatus::OutOfRange: return "out-of-range";
    case ReplyParseStatus::NonMonotonic: return "non-monotonic";
  }
  return "?";
}

struct ReplyParse {
  ReplyParseStatus status = ReplyParseStatus::Unparseable;
  std::vector<std::pair<int, std::string>> pairs;  // (line, value) in reply order
};

namespace detail {

// Recursive-descent parser for the reply's tuple-list format:
//   [(12, "15"), (27, "3/4")]
// A tiny dedicated grammar; reply content is never evaluated as code.
class TupleListParser {
 public:
  explicit TupleListParser(std::string_view s) : s_(s) {}

  bool parse(std::vector<std::pair<int, std::string>>* out) {
    skip_ws();
    if (!consume('[')) return false;
    skip_ws();
    if (consume(']')) return finish();
    while (true) {
      int line = 0;
      std::string value;
      if (!parse_tuple(&line, &value)) return false;
      out->emplace_back(line, std::move(value));
      skip_ws();
      if (consume(',')) {
        skip_ws();
        if (consume(']')) return finish();  // trailing comma
        continue;
      }
      if (consume(']')) return finish();
      return false;
    }
  }

 private:
  bool finish() {
    skip_ws();
    return pos_ == s_.size();  // trailing whitespace only
  }

  bool parse_tuple(int* line, std::string* value) {
    if (!consume('(')) return false;
    skip_ws();
    if (!parse_int(line)) return false;
    skip_ws();
    if (!consume(',')) return false;
    skip_ws();
    if (!parse_string(value)) return false;
    skip_ws();
    return consume(')');
  }

  bool parse_int(int* out) {
    size_t start = pos_;
    bool neg = false;
    if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) {
      neg = s_[pos_] == '-';
      ++pos_;
    }
    long long v = 0;
    size_t digits = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 1000000000LL) return false;  // line numbers are small
      ++pos_;
      ++digits;
    }
    if (digits == 0) {
      pos_ = start;
      return false;
    }
    *out = static_cast<int>(neg ? -v : v);
    return true;
  }

  bool parse_string(std::string* out) {
    if (pos_ >= s_.size()) return false;
    char quote = s_[pos_];
    if (quote != '"' && quote != '\'') return false;
    ++pos_;
    out->clear();
    while (pos_ < s_.size()) {
      char c = s_[pos_++];
      if (c == quote) return true;
      if (c == '\\') {
        if (pos_ >= s_.size()) return false;
        char esc = s_[pos_++];
        switch (esc) {
          case 'n': out->push_back('\n'); break;
          case 't': out->push_back('\t'); break;
          case '\\': out->push_back('\\'); break;
          case '"': out->push_back('"'); break;
          case '\'': out->push_back('\''); break;
          default:
            out->push_back('\\');
            out->push_back(esc);
        }
        continue;
      }
      out->push_back(c);
    }
    return false;  // unterminated
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string_view s_;
  size_t pos_ = 0;
};

inline std::string_view last_nonempty_line(std::string_view reply) {
  size_t end = reply.size();
  while (true) {
    while (end > 0 && (reply[end - 1] == '\n' || reply[end - 1] == '\r')) --end;
    if (end == 0) return {};
    size_t start = reply.rfind('\n', end - 1);
    start = start == std::string_view::npos ? 0 : start + 1;
    std::string_view line = reply.substr(start, end - start);
    if (!trim_view(line).empty()) return line;
    end = start;
  }
}

}  // namespace detail

// Parses the last nonempty line of a reply as a tuple list and validates line
// numbers against the rollout: within [1, n_lines] and non-decreasing (the
// format demands increasing line order; ties mean several values on a line).
inline ReplyParse parse_extraction_reply(std::string_view reply, int n_lines) {
  ReplyParse result;
  std::string_view line = detail::last_nonempty_line(reply);
  if (line.empty()) return result;
  detail::TupleListParser parser(line);
  std::vector<std::pair<int, std::string>> pairs;
  if (!parser.parse(&pairs)) return result;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first < 1 || pairs[i].first > n_lines) {
      result.status = ReplyParseStatus::OutOfRange;
      return result;
    }
    if (i > 0 && pairs[i].first < pairs[i - 1].first) {
      result.status = ReplyParseStatus::NonMonotonic;
      return result;
    }
  }
  result.status = ReplyParseStatus::Ok;
  result.pairs = std::move(pairs);
  return result;
}

// (line, value) pairs in reply order -> candidates with appearance order and
// per-line rank assigned.
inline std::vector<Candidate> candidates_from_pairs(
    const std::vector<std::pair<int, std::string>>& pairs) {
  std::vector<Candidate> out;
  out.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    Candidate c;
    c.order = static_cast<int>(i) + 1;
    c.step_index = pairs[i].first;
    c.value = pairs[i].second;
    c.same_line_rank =
        (i > 0 && pairs[i].first == pairs[i - 1].first) ? out.back().same_line_rank + 1 : 1;
    out.push_back(std::move(c));
  }
  return out;
}

// Runs the extractor over one rollout with retries. The first reply that
// parses and validates wins. Invalid replies (including non-monotonic or
// out-of-range line numbers) are retried rather than repaired; a confused
// reply is not worth salvaging. On exhaustion the status reflects the final
// attempt: transport failure -> Refused, anything else -> Unparseable.
inline ExtractionResult extract_candidates(const Problem& problem, const Rollout& rollout,
                                           ChatClient& client, const ExtractorConfig& config) {
  ExtractionResult result;
  result.rollout_id = rollout.id;
  result.extractor_tag = client.model_name() + "/" + to_string(config.prompt_template) +
                         (config.deterministic_decoding ? "/det" : "/sampled");

  auto messages = build_extraction_prompt(problem, rollout, config.prompt_template);
  ChatOptions options;
  options.deterministic = config.deterministic_decoding;

  bool last_was_transport = false;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    ++result.attempts;
    ChatOutcome outcome = client.complete(messages, options);
    if (!outcome.ok) {
      last_was_transport = outcome.error_kind == ChatErrorKind::Transport;
      continue;
    }
    last_was_transport = false;
    ReplyParse parsed = parse_extraction_reply(outcome.content, rollout.line_count());
    if (parsed.status != ReplyParseStatus::Ok) continue;
    result.candidates = candidates_from_pairs(parsed.pairs);
    result.status = ExtractionStatus::Ok;
    return result;
  }
  result.status = last_was_transport ? ExtractionStatus::Refused : ExtractionStatus::Unparseable;
  result.candidates.clear();
  return result;
}

}  // namespace reflens::extract

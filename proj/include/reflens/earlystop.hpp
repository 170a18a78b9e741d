#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "httplib.h"
#include "json.hpp"
#include "reflens/chat_client.hpp"
#include "reflens/rollout.hpp"
#include "reflens/tokens.hpp"
#include "reflens/util.hpp"
#include "reflens/value_parse.hpp"

namespace reflens::earlystop {

// Question-aware adaptive early stopping of reasoning streams.
//
// Per request: a question-level controller (QRC) picks a reflection budget,
// then a per-sentence detector (CAD) scores each completed line of the
// thinking stream. The budget-th flagged line terminates thinking; the final
// answer comes from a fresh continuation request.

struct StopPolicy {
  double cad_threshold = 0.5;   // per-line score at or above this flags a candidate
  double qrc_threshold = 0.05;  // question score at or above this grants the high budget
  int budget_low = 1;
  int budget_high = 3;
  int max_final_answer_tokens = 512;
  std::string stop_symbol = "</think>";

  bool detector_disabled() const { return cad_threshold > 1.0; }
};

struct DetectorRequest {
  std::string question;
  std::optional<std::string> sentence;  // present: CAD scoring; absent: QRC scoring
};

// Scoring contract: one request, one score in [0, 1]. nullopt signals
// failure (timeout, transport, malformed reply); callers treat failures as
// non-candidates and count them.
class DetectorClient {
 public:
  enum class Kind { Remote, Heuristic };
  virtual ~DetectorClient() = default;
  virtual std::optional<double> score(const DetectorRequest& request) = 0;
  virtual Kind kind() const = 0;
};

// Offline stand-in for a trained candidate-answer detector: a line scores
// 1.0 when it carries a conclusion cue ("so", "thus", "therefore", "answer",
// boxed forms and friends) and an extractable value, else 0.0.
class HeuristicDetector : public DetectorClient {
 public:
  std::optional<double> score(const DetectorRequest& request) override {
    if (!request.sentence) return std::nullopt;  // question-level scoring unsupported
    const std::string& line = *request.sentence;
    return has_cue(line) && line_has_extractable_value(line) ? 1.0 : 0.0;
  }

  Kind kind() const override { return Kind::Heuristic; }

  static bool has_cue(std::string_view line) {
    std::string lower = to_lower(line);
    if (lower.find("\\boxed") != std::string::npos) return true;
    static const char* kUnigrams[] = {"so",     "thus",    "therefore", "hence",  "equals",
                                      "is",     "becomes", "gives",     "yields", "implies",
                                      "answer", "result",  "final",     "box",    "boxed"};
    static const char* kBigrams[] = {"we get", "it follows"};
    for (const char* bigram : kBigrams)
      if (lower.find(bigram) != std::string::npos) return true;
    // Word-boundary scan so "so" does not fire inside "solution".
    size_t i = 0;
    while (i < lower.size()) {
      while (i < lower.size() && !std::isalpha(static_cast<unsigned char>(lower[i]))) ++i;
      size_t start = i;
      while (i < lower.size() && std::isalpha(static_cast<unsigned char>(lower[i]))) ++i;
      std::string_view word(lower.data() + start, i - start);
      for (const char* cue : kUnigrams)
        if (word == cue) return true;
    }
    return false;
  }
};

// Remote detector speaking the {question, sentence} -> {score} contract.
class RemoteDetector : public DetectorClient {
 public:
  RemoteDetector(std::string base_url, std::string path = "/score",
                 std::chrono::milliseconds timeout = std::chrono::milliseconds(2000))
      : base_url_(std::move(base_url)), path_(std::move(path)), timeout_(timeout) {}

  std::optional<double> score(const DetectorRequest& request) override {
    nlohmann::json body;
    body["question"] = request.question;
    if (request.sentence) body["sentence"] = *request.sentence;
    auto [host, base_path] = detail::split_base_url(base_url_);
    httplib::Client cli(host);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    auto res = cli.Post(base_path + path_, body.dump(), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("score") || !parsed["score"].is_number())
      return std::nullopt;
    double s = parsed["score"].get<double>();
    if (s < 0.0 || s > 1.0) return std::nullopt;
    return s;
  }

  Kind kind() const override { return Kind::Remote; }

 private:
  std::string base_url_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

struct BudgetChoice {
  int budget = 1;
  bool qrc_consulted = false;
  bool qrc_failed = false;
  std::optional<double> qrc_score;
};

// Reflection budget for one question: the high budget when the QRC score
// clears the (deliberately low) threshold, the low budget otherwise or when
// no QRC is configured. QRC failure falls back to the low budget and is
// flagged rather than blocking the request.
inline BudgetChoice choose_budget(const std::string& question, DetectorClient* qrc,
                                  const StopPolicy& policy) {
  BudgetChoice choice;
  choice.budget = policy.budget_low;
  if (!qrc) return choice;
  choice.qrc_consulted = true;
  choice.qrc_score = qrc->score(DetectorRequest{question, std::nullopt});
  if (!choice.qrc_score) {
    choice.qrc_failed = true;
    return choice;
  }
  if (*choice.qrc_score >= policy.qrc_threshold) choice.budget = policy.budget_high;
  return choice;
}

enum class Phase { AwaitingBudget, Streaming, Finalizing, Done, PassedThrough };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::AwaitingBudget: return "awaiting-budget";
    case Phase::Streaming: return "streaming";
    case Phase::Finalizing: return "finalizing";
    case Phase::Done: return "done";
    case Phase::PassedThrough: return "passed-through";
  }
  return "?";
}

enum class StreamAction { Forward, StopThinking };

struct SessionMetrics {
  long long lines_scored = 0;
  long long detector_failures = 0;
  long long thinking_tokens = 0;
  long long final_tokens = 0;
  bool stopped_early = false;
  bool qrc_failed = false;

  long long total_output_tokens() const { return thinking_tokens + final_tokens; }
};

// Per-request state machine. Chunks of upstream thinking text stream in;
// each completed line (newline-delimited, matching the extraction unit) is
// scored once, partial lines never. Reaching the budget-th flagged line
// yields StopThinking; nothing past the stop line's newline counts as
// thinking. Chunk boundaries carry no meaning: any re-chunking of the same
// byte stream ends in the same state.
//
// emitted_thinking() is byte-exact: completed lines with their newlines,
// plus (after finish_stream) whatever partial line the stream ended on.
class Session {
 public:
  Session(std::string question, StopPolicy policy,
          TokenCounter counter = approximate_counter())
      : question_(std::move(question)), policy_(std::move(policy)), counter_(std::move(counter)) {}

  // AwaitingBudget -> Streaming.
  void begin(const BudgetChoice& choice, DetectorClient* cad) {
    budget_ = choice.budget;
    cad_ = cad;
    metrics_.qrc_failed = choice.qrc_failed;
    phase_ = Phase::Streaming;
  }

  StreamAction on_chunk(std::string_view chunk) {
    if (phase_ != Phase::Streaming) {
      last_chunk_kept_ = chunk.size();
      return StreamAction::Forward;
    }
    size_t consumed = 0;
    while (consumed < chunk.size()) {
      size_t nl = chunk.find('\n', consumed);
      if (nl == std::string_view::npos) {
        line_buffer_.append(chunk.substr(consumed));
        break;
      }
      line_buffer_.append(chunk.substr(consumed, nl - consumed));
      consumed = nl + 1;
      bool flagged = complete_line();
      if (flagged && candidates_seen_ == budget_) {
        phase_ = Phase::Finalizing;
        last_chunk_kept_ = consumed;  // through the stop line's newline
        metrics_.stopped_early = true;
        metrics_.thinking_tokens = counter_.count(emitted_thinking_);
        return StreamAction::StopThinking;
      }
      if (phase_ != Phase::Streaming) {
        // Upstream's own stop symbol ended the thinking phase; the rest of
        // the chunk is final-answer content.
        last_chunk_kept_ = consumed;
        add_final_text(chunk.substr(consumed));
        return StreamAction::Forward;
      }
    }
    last_chunk_kept_ = chunk.size();
    return StreamAction::Forward;
  }

  // Upstream ended on its own. Flushes the pending partial line and closes
  // the books for this session.
  void finish_stream() {
    if (phase_ == Phase::Streaming) {
      emitted_thinking_ += line_buffer_;
      line_buffer_.clear();
      phase_ = policy_.detector_disabled() ? Phase::PassedThrough : Phase::Done;
    }
    metrics_.thinking_tokens = counter_.count(emitted_thinking_);
    metrics_.final_tokens = counter_.count(final_text_);
  }

  // Final-answer text arriving after thinking ended (either passed through
  // from upstream or produced by the continuation request).
  void add_final_text(std::string_view text) { final_text_.append(text); }

  void record_continuation(std::string_view final_text) {
    final_text_.assign(final_text);
    metrics_.final_tokens = counter_.count(final_text_);
    phase_ = Phase::Done;
  }

  Phase phase() const { return phase_; }
  int budget() const { return budget_; }
  int candidates_seen() const { return candidates_seen_; }
  const std::string& emitted_thinking() const { return emitted_thinking_; }
  const std::string& line_buffer() const { return line_buffer_; }
  const std::string& final_text() const { return final_text_; }
  size_t last_chunk_kept() const { return last_chunk_kept_; }
  const SessionMetrics& metrics() const { return metrics_; }
  const std::string& question() const { return question_; }
  const StopPolicy& policy() const { return policy_; }

 private:
  // Moves the buffered line into the thinking text and scores it. Returns
  // true when the line was flagged as carrying a candidate.
  bool complete_line() {
    std::string line;
    line.swap(line_buffer_);
    emitted_thinking_ += line;
    emitted_thinking_.push_back('\n');
    if (policy_.detector_disabled()) return false;
    if (!policy_.stop_symbol.empty() && line.find(policy_.stop_symbol) != std::string::npos) {
      phase_ = Phase::Done;  // natural end of thinking
      metrics_.thinking_tokens = counter_.count(emitted_thinking_);
      return false;
    }
    ++metrics_.lines_scored;
    std::optional<double> score;
    if (cad_) score = cad_->score(DetectorRequest{question_, line});
    if (!score) {
      ++metrics_.detector_failures;  // failed scores count as non-candidates
      return false;
    }
    if (*score >= policy_.cad_threshold) {
      ++candidates_seen_;
      return true;
    }
    return false;
  }

  std::string question_;
  StopPolicy policy_;
  TokenCounter counter_;
  int budget_ = 1;
  DetectorClient* cad_ = nullptr;
  Phase phase_ = Phase::AwaitingBudget;
  int candidates_seen_ = 0;
  std::string line_buffer_;
  std::string emitted_thinking_;
  std::string final_text_;
  size_t last_chunk_kept_ = 0;
  SessionMetrics metrics_;
};

struct FinalizeResult {
  bool ok = false;
  std::string final_text;  // continuation content (or empty on failure)
  std::string error;
};

// Continuation request carrying the kept thinking plus the stop symbol as an
// assistant prefix; new tokens capped by policy.
inline FinalizeResult finalize(Session& session, const Problem& problem, ChatClient& client) {
  FinalizeResult result;
  ChatOptions options;
  options.deterministic = true;
  options.max_tokens = session.policy().max_final_answer_tokens;
  options.extra_body = {{"continue_final_message", true}, {"add_generation_prompt", false}};
  std::string assistant_prefix =
      session.emitted_thinking() + session.policy().stop_symbol + "\n";
  ChatOutcome outcome = client.complete({ChatMessage{"user", problem.statement},
                                         ChatMessage{"assistant", assistant_prefix}},
                                        options);
  if (!outcome.ok) {
    result.error = outcome.error;
    session.record_continuation("");
    return result;
  }
  result.ok = true;
  result.final_text = outcome.content;
  session.record_continuation(result.final_text);
  return result;
}

}  // namespace reflens::earlystop

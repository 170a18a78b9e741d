#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflens/chat_client.hpp"
#include "reflens/rollout.hpp"
#include "reflens/tokens.hpp"
#include "reflens/util.hpp"
#include "reflens/value_parse.hpp"
#include "reflens/verifier.hpp"

namespace reflens::curation {

// Builds reflection-controlled SFT datasets: rollouts truncated at their i-th
// candidate, continued to a final answer, filtered for consistency, then
// token-budget equalized or mixed by corrective ratio.

struct CurationRecord {
  std::string problem_id;
  int cut_index = 0;  // i: the candidate the thinking was truncated at
  std::string prompt;
  std::string response;  // truncated thinking + stop symbol + continuation
  std::string source_rollout_id;
  TokenCount token_count;
  std::string cut_candidate_value;
  std::string final_answer;  // parsed from the continuation
};

struct MixtureSpec {
  double corrective_ratio = 0.0;  // r in [0, 1]
  uint64_t seed = 0;
};

struct InsufficientCandidatesError : std::invalid_argument {
  InsufficientCandidatesError()
      : std::invalid_argument("cut index exceeds the rollout's candidate count") {}
};

struct InsufficientTokensError : std::runtime_error {
  explicit InsufficientTokensError(const std::string& what) : std::runtime_error(what) {}
};

// One verified rollout as curation sees it.
struct CurationInput {
  Problem problem;
  Rollout rollout;
  std::vector<Candidate> candidates;
};

inline long long count_correct_candidates(std::span<const Candidate> candidates,
                                          std::string_view gold) {
  verify::CanonicalAnswer gold_c = verify::normalize(gold);
  long long n = 0;
  for (const Candidate& c : candidates)
    if (verify::equivalent_canonical(verify::normalize(c.value), gold_c)) ++n;
  return n;
}

// Keeps rollouts that (1) end on a gold-equivalent final answer and (2) show
// the correct answer strictly more than min_correct_occurrences times as a
// candidate. A rollout with exactly the threshold count is dropped.
inline std::vector<CurationInput> filter_eligible(std::vector<CurationInput> corpus,
                                                  long long min_correct_occurrences = 6) {
  std::vector<CurationInput> kept;
  for (CurationInput& input : corpus) {
    const std::string& gold = input.problem.gold_answer;
    bool final_ok = false;
    if (input.rollout.final_answer) {
      final_ok = verify::equivalent(*input.rollout.final_answer, gold);
    } else if (const Candidate* last = final_candidate(input.candidates)) {
      final_ok = verify::equivalent(last->value, gold);
    }
    if (!final_ok) continue;
    if (count_correct_candidates(input.candidates, gold) <= min_correct_occurrences) continue;
    kept.push_back(std::move(input));
  }
  return kept;
}

// Thinking truncated at the i-th candidate: lines up to and including the
// candidate's whole line, then the stop symbol on its own line. The text
// before the symbol is a prefix of raw_text, so cut-at-i nests inside
// cut-at-j for i < j.
inline std::string truncate_at(const Rollout& rollout, std::span<const Candidate> candidates,
                               int i, std::string_view stop_symbol = "</think>") {
  if (i < 1 || static_cast<size_t>(i) > candidates.size()) throw InsufficientCandidatesError();
  int cut_line = candidates[static_cast<size_t>(i) - 1].step_index;
  std::string out;
  for (const Step& step : rollout.steps) {
    if (step.index > cut_line) break;
    if (step.index > 1) out.push_back('\n');
    out += step.text;
  }
  out.push_back('\n');
  out += stop_symbol;
  return out;
}

// Continues a truncated rollout on the generating model and parses the final
// answer out of the continuation (boxed form preferred, else the last line's
// trailing value).
class ContinuationClient {
 public:
  virtual ~ContinuationClient() = default;
  virtual ChatOutcome continue_thinking(const Problem& problem,
                                        const std::string& truncated_thinking,
                                        int max_new_tokens) = 0;
};

// Assistant-prefix continuation over a chat-completions endpoint. The
// truncated thinking (ending in the stop symbol) is sent as the partial
// assistant turn; continuation flags ride in extra_body for servers that
// need them.
class ChatContinuationClient : public ContinuationClient {
 public:
  ChatContinuationClient(ChatClient& client, nlohmann::json extra_body = {
                                                 {"continue_final_message", true},
                                                 {"add_generation_prompt", false}})
      : client_(client), extra_body_(std::move(extra_body)) {}

  ChatOutcome continue_thinking(const Problem& problem, const std::string& truncated_thinking,
                                int max_new_tokens) override {
    ChatOptions options;
    options.deterministic = true;
    options.max_tokens = max_new_tokens;
    options.extra_body = extra_body_;
    return client_.complete({ChatMessage{"user", problem.statement},
                             ChatMessage{"assistant", truncated_thinking}},
                            options);
  }

 private:
  ChatClient& client_;
  nlohmann::json extra_body_;
};

struct ContinuationResult {
  enum class Status { Ok, TransportFailed, UnparseableFinalAnswer };
  Status status = Status::TransportFailed;
  std::string final_segment;
  std::string parsed_final_answer;
};

inline ContinuationResult continue_generation(const Problem& problem,
                                              const std::string& truncated_thinking,
                                              ContinuationClient& client, int max_new_tokens) {
  ContinuationResult result;
  ChatOutcome outcome = client.continue_thinking(problem, truncated_thinking, max_new_tokens);
  if (!outcome.ok) {
    result.status = ContinuationResult::Status::TransportFailed;
    return result;
  }
  result.final_segment = outcome.content;
  auto parsed = parse_final_answer(outcome.content);
  if (!parsed) {
    result.status = ContinuationResult::Status::UnparseableFinalAnswer;
    return result;
  }
  result.parsed_final_answer = *parsed;
  result.status = ContinuationResult::Status::Ok;
  return result;
}

// Keep iff the continued generation lands on the candidate we truncated at.
inline bool consistency_filter(const CurationRecord& record,
                               std::string_view cut_candidate_value) {
  return verify::equivalent(record.final_answer, cut_candidate_value);
}

struct CutDatasetStats {
  long long eligible_inputs = 0;
  long long skipped_too_few_candidates = 0;  // rollouts with fewer than i candidates
  long long skipped_shared_cut_line = 0;     // candidate i+1 sits on the cut line
  long long continuation_transport_failures = 0;
  long long unparseable_final_answers = 0;
  long long stop_symbol_conflicts = 0;
  long long dropped_inconsistent = 0;
  long long kept = 0;

  double drop_rate() const {
    long long attempted = kept + dropped_inconsistent;
    return attempted == 0 ? 0.0
                          : static_cast<double>(dropped_inconsistent) /
                                static_cast<double>(attempted);
  }
};

struct CutDataset {
  int cut_index = 0;
  std::vector<CurationRecord> records;
  CutDatasetStats stats;
};

struct CurationOptions {
  std::string stop_symbol = "</think>";
  int max_new_tokens = 512;
  TokenCounter counter = approximate_counter();
  unsigned concurrency = 4;
};

// Builds one cut-at-i dataset from eligible inputs. Responses carry exactly
// one stop symbol; records failing that or the consistency filter are
// dropped and counted. Output order is deterministic (sorted by problem,
// rollout) no matter how continuations interleave.
inline CutDataset build_cut_dataset(std::span<const CurationInput> eligible, int cut_index,
                                    ContinuationClient& client, const CurationOptions& options) {
  CutDataset dataset;
  dataset.cut_index = cut_index;
  dataset.stats.eligible_inputs = static_cast<long long>(eligible.size());

  std::vector<std::optional<CurationRecord>> slots(eligible.size());
  std::vector<int> failures(eligible.size(), 0);
  enum { kNone = 0, kTooFew, kSharedLine, kTransport, kUnparseable, kSymbolConflict, kInconsistent };

  parallel_for_each(eligible.size(), options.concurrency, [&](size_t idx) {
    const CurationInput& input = eligible[idx];
    if (static_cast<size_t>(cut_index) > input.candidates.size()) {
      failures[idx] = kTooFew;
      return;
    }
    // Whole-line truncation cannot make a record with exactly i candidates
    // when candidate i+1 shares the cut line.
    if (static_cast<size_t>(cut_index) < input.candidates.size() &&
        input.candidates[static_cast<size_t>(cut_index)].step_index ==
            input.candidates[static_cast<size_t>(cut_index) - 1].step_index) {
      failures[idx] = kSharedLine;
      return;
    }
    std::string thinking = truncate_at(input.rollout, input.candidates, cut_index,
                                       options.stop_symbol);
    if (thinking.find(options.stop_symbol) !=
        thinking.rfind(options.stop_symbol)) {  // symbol already inside the thinking
      failures[idx] = kSymbolConflict;
      return;
    }
    ContinuationResult cont =
        continue_generation(input.problem, thinking, client, options.max_new_tokens);
    if (cont.status == ContinuationResult::Status::TransportFailed) {
      failures[idx] = kTransport;
      return;
    }
    if (cont.status == ContinuationResult::Status::UnparseableFinalAnswer) {
      failures[idx] = kUnparseable;
      return;
    }
    if (cont.final_segment.find(options.stop_symbol) != std::string::npos) {
      failures[idx] = kSymbolConflict;
      return;
    }
    CurationRecord record;
    record.problem_id = input.problem.id;
    record.cut_index = cut_index;
    record.prompt = input.problem.statement;
    record.response = thinking + cont.final_segment;
    record.source_rollout_id = input.rollout.id;
    record.cut_candidate_value = input.candidates[static_cast<size_t>(cut_index) - 1].value;
    record.final_answer = cont.parsed_final_answer;
    record.token_count.mode = options.counter.mode;
    record.token_count.value =
        options.counter.count(record.prompt) + options.counter.count(record.response);
    if (!consistency_filter(record, record.cut_candidate_value)) {
      failures[idx] = kInconsistent;
      return;
    }
    slots[idx] = std::move(record);
  });

  for (size_t idx = 0; idx < slots.size(); ++idx) {
    switch (failures[idx]) {
      case kTooFew: ++dataset.stats.skipped_too_few_candidates; break;
      case kSharedLine: ++dataset.stats.skipped_shared_cut_line; break;
      case kTransport: ++dataset.stats.continuation_transport_failures; break;
      case kUnparseable: ++dataset.stats.unparseable_final_answers; break;
      case kSymbolConflict: ++dataset.stats.stop_symbol_conflicts; break;
      case kInconsistent: ++dataset.stats.dropped_inconsistent; break;
      default: break;
    }
    if (slots[idx]) dataset.records.push_back(std::move(*slots[idx]));
  }
  std::sort(dataset.records.begin(), dataset.records.end(),
            [](const CurationRecord& a, const CurationRecord& b) {
              return std::tie(a.problem_id, a.source_rollout_id) <
                     std::tie(b.problem_id, b.source_rollout_id);
            });
  dataset.stats.kept = static_cast<long long>(dataset.records.size());
  return dataset;
}

// Seeded downsampling to a shared token budget: records are shuffled
// deterministically and taken until the next record would overshoot, leaving
// every dataset within one maximum-record-size below the budget.
inline std::vector<CurationRecord> equalize_one(std::vector<CurationRecord> records,
                                                long long budget_tokens, DetRng& rng) {
  long long total = 0;
  for (const CurationRecord& r : records) total += r.token_count.value;
  if (total < budget_tokens)
    throw InsufficientTokensError("dataset holds " + std::to_string(total) +
                                  " tokens, below budget " + std::to_string(budget_tokens));
  std::sort(records.begin(), records.end(),
            [](const CurationRecord& a, const CurationRecord& b) {
              return std::tie(a.problem_id, a.source_rollout_id, a.cut_index) <
                     std::tie(b.problem_id, b.source_rollout_id, b.cut_index);
            });
  det_shuffle(records, rng);
  std::vector<CurationRecord> selected;
  long long running = 0;
  for (CurationRecord& r : records) {
    if (running + r.token_count.value > budget_tokens) break;
    running += r.token_count.value;
    selected.push_back(std::move(r));
  }
  std::sort(selected.begin(), selected.end(),
            [](const CurationRecord& a, const CurationRecord& b) {
              return std::tie(a.problem_id, a.source_rollout_id, a.cut_index) <
                     std::tie(b.problem_id, b.source_rollout_id, b.cut_index);
            });
  return selected;
}

inline std::vector<std::vector<CurationRecord>> equalize_token_budget(
    std::vector<std::vector<CurationRecord>> datasets, long long budget_tokens, uint64_t seed) {
  std::vector<std::vector<CurationRecord>> out;
  out.reserve(datasets.size());
  for (size_t i = 0; i < datasets.size(); ++i) {
    DetRng rng(seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    out.push_back(equalize_one(std::move(datasets[i]), budget_tokens, rng));
  }
  return out;
}

// --- corrective/confirmatory mixtures ---------------------------------------

inline bool contains_corrective(std::span<const Transition> transitions) {
  return std::any_of(transitions.begin(), transitions.end(),
                     [](const Transition& t) { return t.kind == TransitionKind::FT; });
}

inline bool all_tt(std::span<const Transition> transitions) {
  return std::all_of(transitions.begin(), transitions.end(),
                     [](const Transition& t) { return t.kind == TransitionKind::TT; });
}

struct PairedRollouts {
  Problem problem;
  std::optional<Rollout> corrective;    // at least one F->T reflection
  std::optional<Rollout> confirmatory;  // solely T->T reflections
};

struct MixtureEntry {
  std::string problem_id;
  std::string rollout_id;
  bool used_corrective = false;
};

struct MixtureResult {
  std::vector<MixtureEntry> dataset;
  std::vector<std::string> excluded_problem_ids;  // missing one side of the pair
  long long corrective_count = 0;
};

// Exactly round(r * P) problems contribute their corrective rollout; the
// remainder contribute the confirmatory one. Selection is seed-deterministic.
inline MixtureResult build_corrective_mixture(std::span<const PairedRollouts> problems,
                                              const MixtureSpec& spec) {
  MixtureResult result;
  std::vector<const PairedRollouts*> usable;
  for (const PairedRollouts& p : problems) {
    if (p.corrective && p.confirmatory)
      usable.push_back(&p);
    else
      result.excluded_problem_ids.push_back(p.problem.id);
  }
  std::sort(usable.begin(), usable.end(),
            [](const PairedRollouts* a, const PairedRollouts* b) {
              return a->problem.id < b->problem.id;
            });
  long long target = std::llround(spec.corrective_ratio * static_cast<double>(usable.size()));
  DetRng rng(spec.seed);
  std::vector<size_t> order(usable.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  det_shuffle(order, rng);

  std::vector<bool> corrective_pick(usable.size(), false);
  for (long long i = 0; i < target; ++i) corrective_pick[order[static_cast<size_t>(i)]] = true;

  for (size_t i = 0; i < usable.size(); ++i) {
    const PairedRollouts& p = *usable[i];
    MixtureEntry entry;
    entry.problem_id = p.problem.id;
    entry.used_corrective = corrective_pick[i];
    entry.rollout_id = corrective_pick[i] ? p.corrective->id : p.confirmatory->id;
    result.dataset.push_back(std::move(entry));
  }
  result.corrective_count = target;
  return result;
}

}  // namespace reflens::curation

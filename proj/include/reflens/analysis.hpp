#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "reflens/rollout.hpp"
#include "reflens/tokens.hpp"
#include "reflens/verifier.hpp"

namespace reflens::analysis {

// One rollout with everything verification attached to it. The unit every
// aggregate below folds over.
struct AnalyzedRollout {
  Rollout rollout;
  std::string gold_answer;
  std::vector<Candidate> candidates;
  std::vector<Transition> transitions;
  std::string model_tag;
  std::string dataset_tag;
};

enum class GroupBy { None, Model, Dataset, ModelAndDataset };

inline std::optional<GroupBy> group_by_from_string(std::string_view s) {
  if (s == "none") return GroupBy::None;
  if (s == "model") return GroupBy::Model;
  if (s == "dataset") return GroupBy::Dataset;
  if (s == "model,dataset" || s == "dataset,model") return GroupBy::ModelAndDataset;
  return std::nullopt;
}

struct GroupKey {
  std::string model;
  std::string dataset;

  auto operator<=>(const GroupKey&) const = default;

  std::string label() const {
    if (model.empty() && dataset.empty()) return "all";
    if (dataset.empty()) return model;
    if (model.empty()) return dataset;
    return model + "/" + dataset;
  }
};

inline GroupKey group_key(const AnalyzedRollout& r, GroupBy by) {
  switch (by) {
    case GroupBy::None: return {};
    case GroupBy::Model: return {r.model_tag, ""};
    case GroupBy::Dataset: return {"", r.dataset_tag};
    case GroupBy::ModelAndDataset: return {r.model_tag, r.dataset_tag};
  }
  return {};
}

// --- transition taxonomy -----------------------------------------------------

struct TransitionBreakdown {
  GroupKey group;
  long long counts[5] = {0, 0, 0, 0, 0};  // indexed by TransitionKind
  long long total = 0;

  long long count(TransitionKind k) const { return counts[static_cast<int>(k)]; }
  double fraction(TransitionKind k) const {
    return total == 0 ? 0.0 : static_cast<double>(count(k)) / static_cast<double>(total);
  }
  double confirmatory_fraction() const {
    return total == 0 ? 0.0
                      : static_cast<double>(count(TransitionKind::TT) +
                                            count(TransitionKind::FF_SAME)) /
                            static_cast<double>(total);
  }
};

inline std::vector<TransitionBreakdown> transition_breakdown(
    std::span<const AnalyzedRollout> corpus, GroupBy by) {
  std::map<GroupKey, TransitionBreakdown> acc;
  for (const AnalyzedRollout& r : corpus) {
    GroupKey key = group_key(r, by);
    TransitionBreakdown& b = acc[key];
    b.group = key;
    for (const Transition& t : r.transitions) {
      ++b.counts[static_cast<int>(t.kind)];
      ++b.total;
    }
  }
  std::vector<TransitionBreakdown> out;
  out.reserve(acc.size());
  for (auto& [key, b] : acc) out.push_back(std::move(b));
  return out;
}

// --- first-candidate positions ----------------------------------------------

struct PositionHistogram {
  int n_bins = 0;
  std::vector<long long> counts;       // per bin over (0, 1]
  std::vector<double> fractions;       // counts / counted
  long long counted = 0;               // rollouts with >= 1 candidate
  long long zero_candidate_rollouts = 0;  // reported separately, not binned
};

inline int position_bin(double position, int n_bins) {
  int bin = static_cast<int>(position * n_bins);
  if (bin >= n_bins) bin = n_bins - 1;
  if (bin < 0) bin = 0;
  return bin;
}

inline PositionHistogram first_position_histogram(std::span<const AnalyzedRollout> corpus,
                                                  int n_bins) {
  PositionHistogram h;
  h.n_bins = n_bins;
  h.counts.assign(static_cast<size_t>(n_bins), 0);
  h.fractions.assign(static_cast<size_t>(n_bins), 0.0);
  for (const AnalyzedRollout& r : corpus) {
    const Candidate* first = first_candidate(r.candidates);
    if (!first) {
      ++h.zero_candidate_rollouts;
      continue;
    }
    double pos = relative_position(*first, r.rollout);
    ++h.counts[static_cast<size_t>(position_bin(pos, n_bins))];
    ++h.counted;
  }
  if (h.counted > 0)
    for (int i = 0; i < n_bins; ++i)
      h.fractions[static_cast<size_t>(i)] =
          static_cast<double>(h.counts[static_cast<size_t>(i)]) / static_cast<double>(h.counted);
  return h;
}

// --- token accounting ---------------------------------------------------------

struct TokenBreakdown {
  long long tokens_to_first_candidate = 0;
  long long reflection_tokens = 0;
  CountingMode counting_mode = CountingMode::Approximate;
};

// Splits at end of the first candidate's line: everything up to and including
// that line is pre-candidate, the rest is reflection. Zero-candidate rollouts
// count everything as pre-candidate.
inline TokenBreakdown token_breakdown(const Rollout& rollout,
                                      std::span<const Candidate> candidates,
                                      const TokenCounter& counter) {
  TokenBreakdown out;
  out.counting_mode = counter.mode;
  const Candidate* first = first_candidate(candidates);
  if (!first) {
    out.tokens_to_first_candidate = counter.count(rollout.raw_text);
    return out;
  }
  std::vector<std::string> prefix_lines, suffix_lines;
  for (const Step& s : rollout.steps)
    (s.index <= first->step_index ? prefix_lines : suffix_lines).push_back(s.text);
  out.tokens_to_first_candidate = counter.count(join_lines(prefix_lines));
  out.reflection_tokens = suffix_lines.empty() ? 0 : counter.count(join_lines(suffix_lines));
  return out;
}

// --- first vs final accuracy --------------------------------------------------

struct AccuracyPair {
  GroupKey group;
  double first_accuracy = 0.0;
  double final_accuracy = 0.0;
  long long n = 0;
};

inline bool first_candidate_correct(const AnalyzedRollout& r) {
  const Candidate* first = first_candidate(r.candidates);
  return first && verify::equivalent(first->value, r.gold_answer);
}

// Final answer preference: the rollout's explicit post-thinking answer when
// present, else the last candidate.
inline bool final_answer_correct(const AnalyzedRollout& r) {
  if (r.rollout.final_answer)
    return verify::equivalent(*r.rollout.final_answer, r.gold_answer);
  const Candidate* last = final_candidate(r.candidates);
  return last && verify::equivalent(last->value, r.gold_answer);
}

inline std::vector<AccuracyPair> first_vs_final_accuracy(std::span<const AnalyzedRollout> corpus,
                                                         GroupBy by) {
  struct Tally {
    long long first = 0, final_ = 0, n = 0;
  };
  std::map<GroupKey, Tally> acc;
  for (const AnalyzedRollout& r : corpus) {
    Tally& t = acc[group_key(r, by)];
    ++t.n;
    if (first_candidate_correct(r)) ++t.first;
    if (final_answer_correct(r)) ++t.final_;
  }
  std::vector<AccuracyPair> out;
  for (auto& [key, t] : acc) {
    AccuracyPair p;
    p.group = key;
    p.n = t.n;
    p.first_accuracy = t.n ? static_cast<double>(t.first) / static_cast<double>(t.n) : 0.0;
    p.final_accuracy = t.n ? static_cast<double>(t.final_) / static_cast<double>(t.n) : 0.0;
    out.push_back(std::move(p));
  }
  return out;
}

// --- corrective probability ----------------------------------------------------

// p(F->T): probability the next candidate is correct given the current one is
// incorrect. Undefined (nullopt) when no transition starts from an incorrect
// candidate.
inline std::optional<double> p_f_to_t(std::span<const TransitionKind> kinds) {
  long long ft = 0, from_false = 0;
  for (TransitionKind k : kinds) {
    if (k == TransitionKind::FT || k == TransitionKind::FF_SAME || k == TransitionKind::FF_DIFF) {
      ++from_false;
      if (k == TransitionKind::FT) ++ft;
    }
  }
  if (from_false == 0) return std::nullopt;
  return static_cast<double>(ft) / static_cast<double>(from_false);
}

inline std::optional<double> p_f_to_t(std::span<const Transition> transitions) {
  std::vector<TransitionKind> kinds;
  kinds.reserve(transitions.size());
  for (const Transition& t : transitions) kinds.push_back(t.kind);
  return p_f_to_t(std::span<const TransitionKind>(kinds));
}

// --- candidate counts -----------------------------------------------------------

struct CandidateCountStat {
  GroupKey group;
  double mean = 0.0;
  long long n = 0;
};

inline std::vector<CandidateCountStat> candidates_per_rollout(
    std::span<const AnalyzedRollout> corpus, GroupBy by) {
  struct Tally {
    long long candidates = 0, n = 0;
  };
  std::map<GroupKey, Tally> acc;
  for (const AnalyzedRollout& r : corpus) {
    Tally& t = acc[group_key(r, by)];
    t.candidates += static_cast<long long>(r.candidates.size());
    ++t.n;
  }
  std::vector<CandidateCountStat> out;
  for (auto& [key, t] : acc) {
    CandidateCountStat s;
    s.group = key;
    s.n = t.n;
    s.mean = t.n ? static_cast<double>(t.candidates) / static_cast<double>(t.n) : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

// --- percentage rendering --------------------------------------------------------

// Signed relative change, one decimal, explicit sign: 15125 -> 11414 renders
// "-24.5%". Percentage columns always recompute from the raw columns.
inline std::string signed_change_percent(double base, double now) {
  double pct = base == 0.0 ? 0.0 : (now - base) / base * 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.1f%%", pct);
  return buf;
}

inline double reduction_fraction(double base, double now) {
  return base == 0.0 ? 0.0 : (base - now) / base;
}

// --- report emission ---------------------------------------------------------------

struct ReportOptions {
  GroupBy group_by = GroupBy::ModelAndDataset;
  int histogram_bins = 20;
  TokenCounter counter = approximate_counter();
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

// Writes the plot-ready aggregate files plus a manifest. Deterministic: rows
// are ordered by group key, files always written in the same order.
inline std::vector<std::filesystem::path> emit_report(std::span<const AnalyzedRollout> corpus,
                                                      const std::filesystem::path& out_dir,
                                                      const ReportOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto open = [&](const char* name) {
    fs::path p = out_dir / name;
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write report file: " + p.string());
    written.push_back(p);
    return f;
  };

  {
    auto f = open("transition_breakdown.csv");
    f << "model,dataset,kind,count,fraction\n";
    for (const TransitionBreakdown& b : transition_breakdown(corpus, options.group_by))
      for (TransitionKind k : {TransitionKind::TT, TransitionKind::FF_SAME, TransitionKind::FT,
                               TransitionKind::FF_DIFF, TransitionKind::TF})
        f << detail::csv_escape(b.group.model) << ',' << detail::csv_escape(b.group.dataset)
          << ',' << to_string(k) << ',' << b.count(k) << ',' << detail::fmt_double(b.fraction(k))
          << '\n';
  }
  {
    auto f = open("first_position_histogram.csv");
    f << "bin_index,bin_low,bin_high,count,fraction\n";
    PositionHistogram h = first_position_histogram(corpus, options.histogram_bins);
    for (int i = 0; i < h.n_bins; ++i)
      f << i << ',' << detail::fmt_double(static_cast<double>(i) / h.n_bins) << ','
        << detail::fmt_double(static_cast<double>(i + 1) / h.n_bins) << ','
        << h.counts[static_cast<size_t>(i)] << ','
        << detail::fmt_double(h.fractions[static_cast<size_t>(i)]) << '\n';
  }
  {
    auto f = open("token_breakdown.csv");
    f << "model,dataset,mean_tokens_to_first,mean_reflection_tokens,counting_mode,n\n";
    struct Tally {
      long long first = 0, refl = 0, n = 0;
    };
    std::map<GroupKey, Tally> acc;
    for (const AnalyzedRollout& r : corpus) {
      TokenBreakdown tb = token_breakdown(r.rollout, r.candidates, options.counter);
      Tally& t = acc[group_key(r, options.group_by)];
      t.first += tb.tokens_to_first_candidate;
      t.refl += tb.reflection_tokens;
      ++t.n;
    }
    for (const auto& [key, t] : acc)
      f << detail::csv_escape(key.model) << ',' << detail::csv_escape(key.dataset) << ','
        << detail::fmt_double(t.n ? static_cast<double>(t.first) / t.n : 0.0) << ','
        << detail::fmt_double(t.n ? static_cast<double>(t.refl) / t.n : 0.0) << ','
        << to_string(options.counter.mode) << ',' << t.n << '\n';
  }
  {
    auto f = open("accuracy.csv");
    f << "model,dataset,first_accuracy,final_accuracy,n\n";
    for (const AccuracyPair& p : first_vs_final_accuracy(corpus, options.group_by))
      f << detail::csv_escape(p.group.model) << ',' << detail::csv_escape(p.group.dataset) << ','
        << detail::fmt_double(p.first_accuracy) << ',' << detail::fmt_double(p.final_accuracy)
        << ',' << p.n << '\n';
  }
  {
    auto f = open("candidates_per_rollout.csv");
    f << "model,dataset,mean_candidates,n\n";
    for (const CandidateCountStat& s : candidates_per_rollout(corpus, options.group_by))
      f << detail::csv_escape(s.group.model) << ',' << detail::csv_escape(s.group.dataset) << ','
        << detail::fmt_double(s.mean) << ',' << s.n << '\n';
  }
  {
    auto f = open("p_f_to_t.csv");
    f << "model,dataset,ft,from_false,p_f_to_t\n";
    std::map<GroupKey, std::vector<TransitionKind>> acc;
    for (const AnalyzedRollout& r : corpus) {
      auto& kinds = acc[group_key(r, options.group_by)];
      for (const Transition& t : r.transitions) kinds.push_back(t.kind);
    }
    for (const auto& [key, kinds] : acc) {
      long long ft = 0, from_false = 0;
      for (TransitionKind k : kinds)
        if (k == TransitionKind::FT || k == TransitionKind::FF_SAME ||
            k == TransitionKind::FF_DIFF) {
          ++from_false;
          ft += k == TransitionKind::FT ? 1 : 0;
        }
      auto p = p_f_to_t(std::span<const TransitionKind>(kinds));
      f << detail::csv_escape(key.model) << ',' << detail::csv_escape(key.dataset) << ',' << ft
        << ',' << from_false << ',' << (p ? detail::fmt_double(*p) : std::string()) << '\n';
    }
  }
  {
    fs::path p = out_dir / "manifest.json";
    std::ofstream f(p, std::ios::trunc);
    nlohmann::ordered_json manifest;
    manifest["schema"] = "v1";
    manifest["rollouts"] = corpus.size();
    long long zero = 0, transitions = 0;
    for (const AnalyzedRollout& r : corpus) {
      if (r.candidates.empty()) ++zero;
      transitions += static_cast<long long>(r.transitions.size());
    }
    manifest["zero_candidate_rollouts"] = zero;
    manifest["transitions"] = transitions;
    manifest["counting_mode"] = to_string(options.counter.mode);
    manifest["histogram_bins"] = options.histogram_bins;
    auto& files = manifest["files"] = nlohmann::ordered_json::array();
    for (const fs::path& w : written) files.push_back(w.filename().string());
    f << manifest.dump(2) << '\n';
    written.push_back(p);
  }
  return written;
}

}  // namespace reflens::analysis

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "reflens/analysis.hpp"
#include "reflens/chat_client.hpp"
#include "reflens/earlystop.hpp"
#include "reflens/sse.hpp"
#include "reflens/storage.hpp"
#include "reflens/verifier.hpp"

namespace reflens::bench {

// Token/accuracy trade-off benchmarking for early-stop policies.
//
// Desk mode replays recorded thinking transcripts through the session state
// machine: no model required, arithmetic fully reproducible. Live mode runs
// real streaming sessions against an endpoint.

struct DeskTranscript {
  std::string problem_id;
  std::string thinking;
  std::string final_answer;
  // Answer the generator would settle on if thinking stopped after a given
  // line. Missing entries fall back to final_answer (recorded continuations
  // almost always land on the cut candidate, so fixtures plant them where it
  // matters).
  std::map<int, std::string> cut_answers;
};

inline storage::Record to_record(const DeskTranscript& t) {
  storage::Record r;
  r["schema"] = storage::kSchemaVersion;
  r["kind"] = "transcript";
  r["problem_id"] = t.problem_id;
  r["thinking"] = t.thinking;
  r["final_answer"] = t.final_answer;
  auto& cuts = r["cut_answers"] = storage::Record::object();
  for (const auto& [line, answer] : t.cut_answers) cuts[std::to_string(line)] = answer;
  return r;
}

inline DeskTranscript transcript_from_record(const storage::Record& r) {
  DeskTranscript t;
  t.problem_id = r.at("problem_id").get<std::string>();
  t.thinking = r.at("thinking").get<std::string>();
  t.final_answer = r.value("final_answer", "");
  if (r.contains("cut_answers"))
    for (auto it = r["cut_answers"].begin(); it != r["cut_answers"].end(); ++it)
      t.cut_answers[std::stoi(it.key())] = it.value().get<std::string>();
  return t;
}

struct DeskOutcome {
  bool stopped = false;
  int stop_line = 0;  // lines of thinking kept when stopped
  long long length_tokens = 0;
  std::string answer;
};

inline DeskOutcome run_desk_session(const DeskTranscript& transcript, const std::string& question,
                                    const earlystop::StopPolicy& policy,
                                    earlystop::DetectorClient* cad,
                                    earlystop::DetectorClient* qrc, const TokenCounter& counter) {
  DeskOutcome outcome;
  earlystop::Session session(question, policy, counter);
  session.begin(earlystop::choose_budget(question, qrc, policy), cad);
  auto action = session.on_chunk(transcript.thinking);
  if (action == earlystop::StreamAction::StopThinking) {
    outcome.stopped = true;
    outcome.stop_line = static_cast<int>(
        std::count(session.emitted_thinking().begin(), session.emitted_thinking().end(), '\n'));
    outcome.length_tokens = session.metrics().thinking_tokens;
    auto it = transcript.cut_answers.find(outcome.stop_line);
    outcome.answer = it != transcript.cut_answers.end() ? it->second : transcript.final_answer;
    return outcome;
  }
  session.finish_stream();
  outcome.length_tokens = session.metrics().thinking_tokens;
  outcome.answer = transcript.final_answer;
  return outcome;
}

struct ArmStats {
  std::string label;
  double accuracy = 0.0;
  double mean_length = 0.0;
  long long n = 0;
  long long stopped = 0;
};

struct DatasetRow {
  std::string dataset;
  ArmStats baseline;
  std::vector<ArmStats> variants;
};

struct BenchReport {
  std::vector<DatasetRow> rows;  // per dataset, sorted; last entry is "Average"
  long long skipped_problems = 0;  // transcripts without a matching problem
};

struct BenchPolicy {
  std::string label;
  earlystop::StopPolicy policy;
  bool use_qrc = false;
};

// Per-problem failures (no transcript, no gold) are excluded from every arm
// symmetrically: the same problem set feeds baseline and variants.
inline BenchReport run_bench_desk(const std::map<std::string, Problem>& problems,
                                  std::span<const DeskTranscript> transcripts,
                                  std::span<const BenchPolicy> policies,
                                  earlystop::DetectorClient* cad, earlystop::DetectorClient* qrc,
                                  const TokenCounter& counter) {
  struct Sample {
    const DeskTranscript* transcript;
    const Problem* problem;
  };
  BenchReport report;
  std::map<std::string, std::vector<Sample>> by_dataset;
  for (const DeskTranscript& t : transcripts) {
    auto it = problems.find(t.problem_id);
    if (it == problems.end()) {
      ++report.skipped_problems;
      continue;
    }
    by_dataset[it->second.source_tag].push_back(Sample{&t, &it->second});
  }
  for (const auto& [dataset, samples] : by_dataset) {
    DatasetRow row;
    row.dataset = dataset;
    row.baseline.label = "baseline";
    row.baseline.n = static_cast<long long>(samples.size());
    long long base_correct = 0, base_length = 0;
    for (const Sample& s : samples) {
      base_length += counter.count(s.transcript->thinking);
      if (verify::equivalent(s.transcript->final_answer, s.problem->gold_answer)) ++base_correct;
    }
    row.baseline.accuracy = samples.empty() ? 0.0 : double(base_correct) / double(samples.size());
    row.baseline.mean_length =
        samples.empty() ? 0.0 : double(base_length) / double(samples.size());

    for (const BenchPolicy& bp : policies) {
      ArmStats arm;
      arm.label = bp.label;
      arm.n = static_cast<long long>(samples.size());
      long long correct = 0, length = 0;
      for (const Sample& s : samples) {
        DeskOutcome o = run_desk_session(*s.transcript, s.problem->statement, bp.policy, cad,
                                         bp.use_qrc ? qrc : nullptr, counter);
        length += o.length_tokens;
        if (o.stopped) ++arm.stopped;
        if (verify::equivalent(o.answer, s.problem->gold_answer)) ++correct;
      }
      arm.accuracy = samples.empty() ? 0.0 : double(correct) / double(samples.size());
      arm.mean_length = samples.empty() ? 0.0 : double(length) / double(samples.size());
      row.variants.push_back(std::move(arm));
    }
    report.rows.push_back(std::move(row));
  }

  // Macro average over datasets.
  if (!report.rows.empty()) {
    DatasetRow avg;
    avg.dataset = "Average";
    avg.baseline.label = "baseline";
    size_t n_variants = report.rows.front().variants.size();
    avg.variants.resize(n_variants);
    for (size_t v = 0; v < n_variants; ++v)
      avg.variants[v].label = report.rows.front().variants[v].label;
    for (const DatasetRow& row : report.rows) {
      avg.baseline.accuracy += row.baseline.accuracy;
      avg.baseline.mean_length += row.baseline.mean_length;
      avg.baseline.n += row.baseline.n;
      for (size_t v = 0; v < n_variants; ++v) {
        avg.variants[v].accuracy += row.variants[v].accuracy;
        avg.variants[v].mean_length += row.variants[v].mean_length;
        avg.variants[v].n += row.variants[v].n;
        avg.variants[v].stopped += row.variants[v].stopped;
      }
    }
    double k = static_cast<double>(report.rows.size());
    avg.baseline.accuracy /= k;
    avg.baseline.mean_length /= k;
    for (ArmStats& arm : avg.variants) {
      arm.accuracy /= k;
      arm.mean_length /= k;
    }
    report.rows.push_back(std::move(avg));
  }
  return report;
}

// --- rendering ---------------------------------------------------------------

inline std::string format_thousands(long long v) {
  std::string digits = std::to_string(v < 0 ? -v : v);
  std::string out;
  int count = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (count && count % 3 == 0) out.push_back(',');
    out.push_back(*it);
    ++count;
  }
  if (v < 0) out.push_back('-');
  std::reverse(out.begin(), out.end());
  return out;
}

// "10,601 (-29.9%)": the rendered value plus its change against the baseline,
// recomputed from the raw columns.
inline std::string render_length_cell(double baseline, double value) {
  return format_thousands(std::llround(value)) + " (" +
         analysis::signed_change_percent(baseline, value) + ")";
}

struct RawLengthRow {
  std::string label;
  double baseline = 0.0;
  std::vector<double> variants;
};

struct RenderedLengthRow {
  std::string label;
  std::string baseline;
  std::vector<std::string> variants;
};

inline std::vector<RenderedLengthRow> render_reduction_rows(std::span<const RawLengthRow> rows) {
  std::vector<RenderedLengthRow> out;
  for (const RawLengthRow& row : rows) {
    RenderedLengthRow r;
    r.label = row.label;
    r.baseline = format_thousands(std::llround(row.baseline));
    for (double v : row.variants) r.variants.push_back(render_length_cell(row.baseline, v));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RawLengthRow> raw_length_rows_from_json(const nlohmann::json& j) {
  std::vector<RawLengthRow> rows;
  for (const auto& rec : j.at("rows")) {
    RawLengthRow row;
    row.label = rec.at("label").get<std::string>();
    row.baseline = rec.at("baseline").get<double>();
    for (const auto& v : rec.at("variants")) row.variants.push_back(v.get<double>());
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string render_bench_csv(const BenchReport& report) {
  std::string out = "dataset,arm,accuracy,mean_length,rendered_length,reduction,stopped,n\n";
  for (const DatasetRow& row : report.rows) {
    char acc[32];
    auto append_arm = [&](const ArmStats& arm, bool is_baseline) {
      std::snprintf(acc, sizeof(acc), "%.4f", arm.accuracy);
      out += row.dataset + "," + arm.label + "," + acc + ",";
      char len[32];
      std::snprintf(len, sizeof(len), "%.1f", arm.mean_length);
      out += len;
      out += ",";
      out += is_baseline ? format_thousands(std::llround(arm.mean_length))
                         : render_length_cell(row.baseline.mean_length, arm.mean_length);
      char red[32];
      std::snprintf(red, sizeof(red), "%.4f",
                    is_baseline ? 0.0
                                : analysis::reduction_fraction(row.baseline.mean_length,
                                                               arm.mean_length));
      out += ",";
      out += red;
      out += "," + std::to_string(arm.stopped) + "," + std::to_string(arm.n) + "\n";
    };
    append_arm(row.baseline, true);
    for (const ArmStats& arm : row.variants) append_arm(arm, false);
  }
  return out;
}

// Fig-7-style sweep point: how much accuracy is traded for how many tokens.
struct SweepPoint {
  std::string label;
  double cad_threshold = 0.0;
  double qrc_threshold = 0.0;
  double accuracy_drop = 0.0;     // percentage points vs baseline
  double token_reduction = 0.0;   // fraction of baseline tokens saved
};

inline std::vector<SweepPoint> sweep_points(const BenchReport& report,
                                            std::span<const BenchPolicy> policies) {
  std::vector<SweepPoint> points;
  if (report.rows.empty()) return points;
  const DatasetRow& avg = report.rows.back();
  for (size_t i = 0; i < avg.variants.size(); ++i) {
    const ArmStats& arm = avg.variants[i];
    SweepPoint p;
    p.label = arm.label;
    if (i < policies.size()) {
      p.cad_threshold = policies[i].policy.cad_threshold;
      p.qrc_threshold = policies[i].policy.qrc_threshold;
    }
    p.accuracy_drop = (avg.baseline.accuracy - arm.accuracy) * 100.0;
    p.token_reduction = analysis::reduction_fraction(avg.baseline.mean_length, arm.mean_length);
    points.push_back(std::move(p));
  }
  return points;
}

// --- live mode -----------------------------------------------------------------

struct LiveOutcome {
  bool ok = false;
  bool stopped = false;
  earlystop::SessionMetrics metrics;
  std::string emitted_thinking;
  std::string final_text;
  std::string error;
};

inline LiveOutcome run_live_session(const EndpointConfig& upstream, const std::string& question,
                                    const earlystop::StopPolicy& policy,
                                    earlystop::DetectorClient* cad,
                                    earlystop::DetectorClient* qrc, const TokenCounter& counter) {
  LiveOutcome outcome;
  nlohmann::json body;
  body["model"] = upstream.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", question}}});
  body["stream"] = true;
  body["temperature"] = 0.0;

  earlystop::Session session(question, policy, counter);
  session.begin(earlystop::choose_budget(question, qrc, policy), cad);

  sse::FrameSplitter splitter;
  auto error = stream_chat_completion(upstream, body.dump(), [&](std::string_view bytes) {
    for (sse::Frame& frame : splitter.feed(bytes)) {
      if (frame.done) {
        session.finish_stream();
        continue;
      }
      auto delta = sse::delta_text(frame);
      if (!delta) continue;
      if (session.phase() != earlystop::Phase::Streaming) {
        session.add_final_text(*delta);
        continue;
      }
      if (session.on_chunk(*delta) == earlystop::StreamAction::StopThinking) return false;
    }
    return true;
  });
  if (error) {
    outcome.error = *error;
    return outcome;
  }
  if (session.phase() == earlystop::Phase::Finalizing) {
    outcome.stopped = true;
    HttpChatClient continuation(upstream);
    Problem p;
    p.id = "live";
    p.statement = question;
    p.gold_answer = "-";
    auto final = earlystop::finalize(session, p, continuation);
    if (!final.ok) {
      outcome.error = final.error;
      return outcome;
    }
  } else if (session.phase() == earlystop::Phase::Streaming) {
    session.finish_stream();
  }
  outcome.ok = true;
  outcome.metrics = session.metrics();
  outcome.emitted_thinking = session.emitted_thinking();
  outcome.final_text = session.final_text();
  return outcome;
}

}  // namespace reflens::bench

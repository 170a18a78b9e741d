#pragma once

// Synthetic corpus generators with planted ground truth.

#include <string>
#include <vector>

#include "reflens/analysis.hpp"
#include "reflens/rollout.hpp"
#include "reflens/util.hpp"

namespace testsupport {

inline std::string random_line(reflens::DetRng& rng, int max_words = 8) {
  static const char* kWords[] = {"so",     "the",   "value", "is",    "compute", "sum",
                                 "factor", "check", "thus",  "gives", "roughly", "equals"};
  int n = static_cast<int>(rng.next_below(static_cast<uint64_t>(max_words)));
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out.push_back(' ');
    out += kWords[rng.next_below(12)];
  }
  return out;
}

inline std::string random_multiline_text(reflens::DetRng& rng, int max_lines = 30) {
  int lines = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_lines)));
  std::string out;
  for (int i = 0; i < lines; ++i) {
    if (i) out.push_back('\n');
    out += random_line(rng);
  }
  if (out.empty()) out = "x";  // rollouts are never fully empty
  return out;
}

// A rollout whose candidate list is planted from a correctness/value-id
// pattern. Gold answer is "1"; value id v plants candidate value
// std::to_string(v), so id 1 is correct and everything else is wrong.
struct PlantedRollout {
  reflens::analysis::AnalyzedRollout analyzed;
  std::vector<bool> correct;
  std::vector<int> value_ids;
};

inline PlantedRollout plant_rollout(reflens::DetRng& rng, const std::string& id,
                                    const std::vector<int>& value_ids,
                                    const std::string& model_tag = "model-a",
                                    const std::string& dataset_tag = "set-1") {
  PlantedRollout planted;
  planted.value_ids = value_ids;
  int n_candidates = static_cast<int>(value_ids.size());
  int n_lines = n_candidates + 2 + static_cast<int>(rng.next_below(6));

  std::vector<std::string> lines;
  for (int i = 0; i < n_lines; ++i) lines.push_back(random_line(rng));

  // Spread candidates over distinct lines, in order.
  std::vector<int> candidate_lines;
  for (int c = 0; c < n_candidates; ++c)
    candidate_lines.push_back(1 + c * (n_lines - 1) / std::max(1, n_candidates));
  for (int c = 1; c < n_candidates; ++c)
    if (candidate_lines[c] <= candidate_lines[c - 1])
      candidate_lines[c] = candidate_lines[c - 1] + 1;

  reflens::analysis::AnalyzedRollout& ar = planted.analyzed;
  ar.gold_answer = "1";
  ar.model_tag = model_tag;
  ar.dataset_tag = dataset_tag;
  for (int c = 0; c < n_candidates; ++c) {
    int line = candidate_lines[c];
    int value = value_ids[static_cast<size_t>(c)];
    lines[static_cast<size_t>(line - 1)] += " so the answer is " + std::to_string(value);
    reflens::Candidate cand;
    cand.order = c + 1;
    cand.step_index = line;
    cand.value = std::to_string(value);
    cand.same_line_rank = 1;
    ar.candidates.push_back(cand);
    planted.correct.push_back(value == 1);
  }
  ar.rollout = reflens::make_rollout(id, "p-" + id, model_tag, reflens::join_lines(lines));
  return planted;
}

// Random correctness/value pattern of the given length.
inline std::vector<int> random_value_ids(reflens::DetRng& rng, int n) {
  std::vector<int> ids;
  for (int i = 0; i < n; ++i)
    ids.push_back(1 + static_cast<int>(rng.next_below(3)));  // 1 == correct
  return ids;
}

// Independent re-extraction over planted rollout text: candidates are the
// " so the answer is <v>" markers plant_rollout writes, one per line.
inline std::vector<reflens::Candidate> mock_extract(const std::string& text) {
  std::vector<reflens::Candidate> out;
  auto lines = reflens::split_lines(text);
  static const std::string kMarker = "so the answer is ";
  for (size_t i = 0; i < lines.size(); ++i) {
    size_t pos = lines[i].find(kMarker);
    if (pos == std::string::npos) continue;
    size_t v = pos + kMarker.size();
    std::string value;
    while (v < lines[i].size() && std::isdigit(static_cast<unsigned char>(lines[i][v])))
      value.push_back(lines[i][v++]);
    if (value.empty()) continue;
    reflens::Candidate c;
    c.order = static_cast<int>(out.size()) + 1;
    c.step_index = static_cast<int>(i) + 1;
    c.value = value;
    c.same_line_rank = 1;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace testsupport

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "reflens/rollout.hpp"

namespace reflens::storage {

// Line-delimited JSON corpora. Every record carries schema "v1"; unknown
// fields round-trip untouched. Writes go through a temp file and a rename so
// readers never observe a partial corpus.

inline constexpr const char* kSchemaVersion = "v1";

using Record = nlohmann::ordered_json;

struct StorageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// External inputs (pre-ingest rollout dumps, scripted continuation files)
// are not required to carry our schema field.
inline std::vector<Record> load_jsonl_relaxed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open file: " + path.string());
  std::vector<Record> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Record rec = Record::parse(line, nullptr, false);
    if (rec.is_discarded())
      throw StorageError(path.string() + ":" + std::to_string(line_no) + ": malformed record");
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<Record> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open corpus: " + path.string());
  std::vector<Record> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Record rec = Record::parse(line, nullptr, false);
    if (rec.is_discarded())
      throw StorageError(path.string() + ":" + std::to_string(line_no) + ": malformed record");
    if (!rec.contains("schema") || rec["schema"] != kSchemaVersion)
      throw StorageError(path.string() + ":" + std::to_string(line_no) +
                         ": missing or unsupported schema version (want \"v1\")");
    records.push_back(std::move(rec));
  }
  return records;
}

inline void save_corpus(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw StorageError("cannot write corpus: " + tmp.string());
    for (const Record& rec : records) {
      Record r = rec;
      if (!r.contains("schema")) {
        Record with_schema;
        with_schema["schema"] = kSchemaVersion;
        for (auto it = r.begin(); it != r.end(); ++it) with_schema[it.key()] = it.value();
        r = std::move(with_schema);
      }
      out << r.dump() << '\n';
    }
    if (!out.good()) throw StorageError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageError("atomic rename failed: " + path.string() + ": " + ec.message());
}

// --- typed views -----------------------------------------------------------
// Known fields are parsed out; everything else stays in the record and is
// re-emitted on save.

inline Record to_record(const Problem& p) {
  Record r;
  r["schema"] = kSchemaVersion;
  r["kind"] = "problem";
  r["id"] = p.id;
  r["statement"] = p.statement;
  r["gold_answer"] = p.gold_answer;
  r["source_tag"] = p.source_tag;
  return r;
}

inline Problem problem_from_record(const Record& r) {
  Problem p;
  p.id = r.at("id").get<std::string>();
  p.statement = r.value("statement", "");
  p.gold_answer = r.at("gold_answer").get<std::string>();
  p.source_tag = r.value("source_tag", "");
  if (p.id.empty()) throw StorageError("problem with empty id");
  if (p.gold_answer.empty()) throw StorageError("problem " + p.id + " has empty gold_answer");
  return p;
}

inline Record to_record(const Rollout& r) {
  Record rec;
  rec["schema"] = kSchemaVersion;
  rec["kind"] = "rollout";
  rec["id"] = r.id;
  rec["problem_id"] = r.problem_id;
  rec["generator_tag"] = r.generator_tag;
  rec["raw_text"] = r.raw_text;
  if (r.final_answer) rec["final_answer"] = *r.final_answer;
  if (r.token_count) {
    rec["token_count"] = r.token_count->value;
    rec["counting_mode"] = to_string(r.token_count->mode);
  }
  return rec;
}

inline Rollout rollout_from_record(const Record& r) {
  std::optional<std::string> final_answer;
  if (r.contains("final_answer") && r["final_answer"].is_string())
    final_answer = r["final_answer"].get<std::string>();
  std::optional<TokenCount> tokens;
  if (r.contains("token_count")) {
    TokenCount tc;
    tc.value = r["token_count"].get<long long>();
    auto mode = counting_mode_from_string(r.value("counting_mode", "approximate"));
    tc.mode = mode.value_or(CountingMode::Approximate);
    tokens = tc;
  }
  return make_rollout(r.at("id").get<std::string>(), r.at("problem_id").get<std::string>(),
                      r.value("generator_tag", ""), r.at("raw_text").get<std::string>(),
                      std::move(final_answer), tokens);
}

inline Record candidates_to_record(const std::string& rollout_id,
                                   const std::vector<Candidate>& candidates,
                                   const std::string& extractor_tag, const std::string& status,
                                   int attempts) {
  Record rec;
  rec["schema"] = kSchemaVersion;
  rec["kind"] = "extraction";
  rec["rollout_id"] = rollout_id;
  rec["extractor_tag"] = extractor_tag;
  rec["status"] = status;
  rec["attempts"] = attempts;
  auto& arr = rec["candidates"] = Record::array();
  for (const Candidate& c : candidates) {
    arr.push_back({{"order", c.order},
                   {"step_index", c.step_index},
                   {"value", c.value},
                   {"same_line_rank", c.same_line_rank}});
  }
  return rec;
}

inline std::vector<Candidate> candidates_from_record(const Record& r) {
  std::vector<Candidate> out;
  if (!r.contains("candidates")) return out;
  for (const auto& c : r["candidates"]) {
    Candidate cand;
    cand.order = c.at("order").get<int>();
    cand.step_index = c.at("step_index").get<int>();
    cand.value = c.at("value").get<std::string>();
    cand.same_line_rank = c.value("same_line_rank", 1);
    out.push_back(std::move(cand));
  }
  return out;
}

}  // namespace reflens::storage

// reflens: analyze reflection behavior in reasoning-model rollouts, curate
// reflection-controlled SFT data, and run/benchmark an early-stopping
// inference proxy.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "reflens/analysis.hpp"
#include "reflens/bench.hpp"
#include "reflens/chat_client.hpp"
#include "reflens/config.hpp"
#include "reflens/curation.hpp"
#include "reflens/earlystop.hpp"
#include "reflens/extractor.hpp"
#include "reflens/proxy.hpp"
#include "reflens/storage.hpp"
#include "reflens/verifier.hpp"

namespace fs = std::filesystem;
using namespace reflens;

namespace {

// Exit codes, also documented in the README.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitInput = 4;
constexpr int kExitEndpoint = 5;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<storage::Record> load_or_throw(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("input file not found: " + path.string());
  return storage::load_corpus(path);
}

std::map<std::string, Problem> load_problems(const fs::path& path) {
  std::map<std::string, Problem> problems;
  for (const auto& rec : load_or_throw(path)) {
    Problem p = storage::problem_from_record(rec);
    if (!problems.emplace(p.id, p).second)
      throw InputError("duplicate problem id: " + p.id);
  }
  return problems;
}

TokenCounter counter_for(const config::ToolConfig& cfg) {
  // Reported-by-api counts ride on the corpus records; text counting always
  // uses the approximate mode.
  (void)cfg;
  return approximate_counter();
}

// --- verified corpus records -------------------------------------------------
// One record per rollout with everything analysis needs.

storage::Record verified_record(const analysis::AnalyzedRollout& ar) {
  storage::Record rec = storage::to_record(ar.rollout);
  rec["kind"] = "verified";
  rec["gold_answer"] = ar.gold_answer;
  rec["model_tag"] = ar.model_tag;
  rec["dataset_tag"] = ar.dataset_tag;
  auto& cands = rec["candidates"] = storage::Record::array();
  for (const Candidate& c : ar.candidates)
    cands.push_back({{"order", c.order},
                     {"step_index", c.step_index},
                     {"value", c.value},
                     {"same_line_rank", c.same_line_rank},
                     {"correct", verify::equivalent(c.value, ar.gold_answer)}});
  auto& trans = rec["transitions"] = storage::Record::array();
  for (const Transition& t : ar.transitions)
    trans.push_back({{"from_order", t.from_order},
                     {"to_order", t.to_order},
                     {"kind", to_string(t.kind)}});
  return rec;
}

analysis::AnalyzedRollout analyzed_from_record(const storage::Record& rec) {
  analysis::AnalyzedRollout ar;
  ar.rollout = storage::rollout_from_record(rec);
  ar.gold_answer = rec.at("gold_answer").get<std::string>();
  ar.model_tag = rec.value("model_tag", "");
  ar.dataset_tag = rec.value("dataset_tag", "");
  ar.candidates = storage::candidates_from_record(rec);
  if (rec.contains("transitions"))
    for (const auto& t : rec["transitions"]) {
      Transition tr;
      tr.from_order = t.at("from_order").get<int>();
      tr.to_order = t.at("to_order").get<int>();
      auto kind = transition_kind_from_string(t.at("kind").get<std::string>());
      if (!kind) throw InputError("unknown transition kind in verified corpus");
      tr.kind = *kind;
      ar.transitions.push_back(tr);
    }
  return ar;
}

// --- subcommands ---------------------------------------------------------------

int cmd_ingest(const fs::path& input, const fs::path& output, const std::string& generator_tag) {
  if (!fs::exists(input)) throw InputError("input file not found: " + input.string());
  std::vector<storage::Record> raw = storage::load_jsonl_relaxed(input);
  std::vector<storage::Record> out;
  long long n = 0;
  for (const auto& rec : raw) {
    std::string text = rec.contains("raw_text") ? rec["raw_text"].get<std::string>()
                                                : rec.value("text", "");
    if (text.empty()) throw InputError("rollout record without text (id hint: " +
                                       rec.value("id", std::string("?")) + ")");
    std::string id = rec.value("id", "");
    if (id.empty()) id = rec.value("problem_id", std::string("rollout")) + "-" +
                         std::to_string(n);
    std::optional<std::string> final_answer;
    if (rec.contains("final_answer") && rec["final_answer"].is_string())
      final_answer = rec["final_answer"].get<std::string>();
    std::optional<TokenCount> tokens;
    if (rec.contains("token_count")) {
      TokenCount tc;
      tc.value = rec["token_count"].get<long long>();
      tc.mode = counting_mode_from_string(rec.value("counting_mode", "reported-by-api"))
                    .value_or(CountingMode::ReportedByApi);
      tokens = tc;
    }
    std::string gen = rec.value("generator_tag", generator_tag);
    Rollout r = make_rollout(id, rec.at("problem_id").get<std::string>(), gen, text,
                             std::move(final_answer), tokens);
    out.push_back(storage::to_record(r));
    ++n;
  }
  storage::save_corpus(output, out);
  std::cout << "ingested " << n << " rollouts -> " << output.string() << "\n";
  return kExitOk;
}

int cmd_extract(const config::ToolConfig& cfg, const fs::path& problems_path,
                const fs::path& rollouts_path, const fs::path& output,
                extract::PromptTemplate template_choice, int max_retries) {
  if (!cfg.extractor_llm) {
    std::cerr << "config error: extract needs an \"extractor\" endpoint block\n";
    return kExitConfig;
  }
  auto problems = load_problems(problems_path);
  std::vector<Rollout> rollouts;
  for (const auto& rec : load_or_throw(rollouts_path))
    rollouts.push_back(storage::rollout_from_record(rec));

  extract::ExtractorConfig xcfg;
  xcfg.prompt_template = template_choice;
  xcfg.max_retries = max_retries;
  xcfg.request_timeout = std::chrono::seconds(cfg.extractor_llm->timeout_seconds);
  EndpointConfig endpoint = cfg.extractor_llm->resolve();
  endpoint.timeout = xcfg.request_timeout;
  HttpChatClient client(endpoint);

  for (const Rollout& r : rollouts)
    if (!problems.count(r.problem_id))
      throw InputError("rollout " + r.id + " references unknown problem " + r.problem_id);

  std::vector<extract::ExtractionResult> results(rollouts.size());
  parallel_for_each(rollouts.size(), cfg.concurrency, [&](size_t i) {
    results[i] =
        extract::extract_candidates(problems.at(rollouts[i].problem_id), rollouts[i], client, xcfg);
  });

  long long ok = 0, refused = 0, unparseable = 0;
  for (const auto& r : results) {
    if (r.status == extract::ExtractionStatus::Ok) ++ok;
    if (r.status == extract::ExtractionStatus::Refused) ++refused;
    if (r.status == extract::ExtractionStatus::Unparseable) ++unparseable;
  }
  if (ok == 0 && refused > 0) {
    std::cerr << "extractor endpoint unreachable (" << refused
              << " refused requests); nothing written\n";
    return kExitEndpoint;
  }
  std::vector<storage::Record> out;
  for (const auto& r : results)
    out.push_back(storage::candidates_to_record(r.rollout_id, r.candidates, r.extractor_tag,
                                                to_string(r.status), r.attempts));
  storage::save_corpus(output, out);
  std::cout << "extracted " << ok << "/" << results.size() << " rollouts (" << unparseable
            << " unparseable, " << refused << " refused) -> " << output.string() << "\n";
  return kExitOk;
}

int cmd_verify(const fs::path& problems_path, const fs::path& rollouts_path,
               const fs::path& extractions_path, const fs::path& output) {
  auto problems = load_problems(problems_path);
  std::map<std::string, Rollout> rollouts;
  for (const auto& rec : load_or_throw(rollouts_path)) {
    Rollout r = storage::rollout_from_record(rec);
    std::string id = r.id;
    if (!rollouts.emplace(id, std::move(r)).second)
      throw InputError("duplicate rollout id: " + id);
  }
  std::vector<storage::Record> out;
  long long transitions_total = 0;
  for (const auto& rec : load_or_throw(extractions_path)) {
    std::string rollout_id = rec.at("rollout_id").get<std::string>();
    auto rit = rollouts.find(rollout_id);
    if (rit == rollouts.end()) throw InputError("extraction for unknown rollout: " + rollout_id);
    auto pit = problems.find(rit->second.problem_id);
    if (pit == problems.end())
      throw InputError("rollout " + rollout_id + " references unknown problem " +
                       rit->second.problem_id);
    analysis::AnalyzedRollout ar;
    ar.rollout = rit->second;
    ar.gold_answer = pit->second.gold_answer;
    ar.model_tag = rit->second.generator_tag;
    ar.dataset_tag = pit->second.source_tag;
    ar.candidates = storage::candidates_from_record(rec);
    ar.transitions = verify::classify_rollout(ar.candidates, ar.gold_answer);
    transitions_total += static_cast<long long>(ar.transitions.size());
    out.push_back(verified_record(ar));
  }
  storage::save_corpus(output, out);
  std::cout << "verified " << out.size() << " rollouts, " << transitions_total
            << " transitions -> " << output.string() << "\n";
  return kExitOk;
}

int cmd_analyze(const fs::path& verified_path, const fs::path& out_dir,
                const std::string& group_by, int bins) {
  auto by = analysis::group_by_from_string(group_by);
  if (!by) {
    std::cerr << "unknown group-by: " << group_by
              << " (expected none|model|dataset|model,dataset)\n";
    return kExitUsage;
  }
  if (bins < 1) {
    std::cerr << "bins must be at least 1\n";
    return kExitUsage;
  }
  std::vector<analysis::AnalyzedRollout> corpus;
  for (const auto& rec : load_or_throw(verified_path)) corpus.push_back(analyzed_from_record(rec));
  analysis::ReportOptions options;
  options.group_by = *by;
  options.histogram_bins = bins;
  auto files = analysis::emit_report(corpus, out_dir, options);
  std::cout << "wrote " << files.size() << " report files under " << out_dir.string() << "\n";
  return kExitOk;
}

// Scripted continuations for offline curation: one text per problem id.
class ScriptedContinuationClient : public curation::ContinuationClient {
 public:
  explicit ScriptedContinuationClient(std::map<std::string, std::string> by_problem)
      : by_problem_(std::move(by_problem)) {}

  ChatOutcome continue_thinking(const Problem& problem, const std::string&, int) override {
    auto it = by_problem_.find(problem.id);
    if (it == by_problem_.end())
      return ChatOutcome::failure(ChatErrorKind::Protocol,
                                  "no scripted continuation for " + problem.id);
    return ChatOutcome::success(it->second);
  }

 private:
  std::map<std::string, std::string> by_problem_;
};

int cmd_curate_cut(const config::ToolConfig& cfg, const fs::path& problems_path,
                   const fs::path& verified_path, const fs::path& continuations_path,
                   const fs::path& out_dir, int cut_from, int cut_to, long long budget,
                   uint64_t seed) {
  auto problems = load_problems(problems_path);
  std::vector<curation::CurationInput> inputs;
  for (const auto& rec : load_or_throw(verified_path)) {
    analysis::AnalyzedRollout ar = analyzed_from_record(rec);
    auto pit = problems.find(ar.rollout.problem_id);
    if (pit == problems.end()) continue;
    curation::CurationInput input;
    input.problem = pit->second;
    input.rollout = std::move(ar.rollout);
    input.candidates = std::move(ar.candidates);
    inputs.push_back(std::move(input));
  }
  auto eligible = curation::filter_eligible(std::move(inputs));

  std::unique_ptr<curation::ContinuationClient> client;
  std::unique_ptr<HttpChatClient> http;
  if (!continuations_path.empty()) {
    if (!fs::exists(continuations_path))
      throw InputError("input file not found: " + continuations_path.string());
    std::map<std::string, std::string> scripted;
    for (const auto& rec : storage::load_jsonl_relaxed(continuations_path))
      scripted[rec.at("problem_id").get<std::string>()] = rec.at("text").get<std::string>();
    client = std::make_unique<ScriptedContinuationClient>(std::move(scripted));
  } else if (cfg.generator_llm) {
    http = std::make_unique<HttpChatClient>(cfg.generator_llm->resolve());
    client = std::make_unique<curation::ChatContinuationClient>(*http);
  } else {
    std::cerr << "config error: curate needs a \"generator\" endpoint or --continuations\n";
    return kExitConfig;
  }

  curation::CurationOptions options;
  options.stop_symbol = cfg.stop_symbol;
  options.counter = counter_for(cfg);
  options.concurrency = cfg.concurrency;

  fs::create_directories(out_dir);
  nlohmann::ordered_json datasets_json = nlohmann::ordered_json::array();

  std::vector<std::vector<curation::CurationRecord>> all_records;
  std::vector<int> cut_indices;
  for (int i = cut_from; i <= cut_to; ++i) {
    auto dataset = curation::build_cut_dataset(eligible, i, *client, options);
    nlohmann::ordered_json entry;
    entry["cut_index"] = i;
    entry["kept"] = dataset.stats.kept;
    entry["dropped_inconsistent"] = dataset.stats.dropped_inconsistent;
    entry["drop_rate"] = dataset.stats.drop_rate();
    entry["skipped_too_few_candidates"] = dataset.stats.skipped_too_few_candidates;
    entry["skipped_shared_cut_line"] = dataset.stats.skipped_shared_cut_line;
    entry["continuation_transport_failures"] = dataset.stats.continuation_transport_failures;
    entry["unparseable_final_answers"] = dataset.stats.unparseable_final_answers;
    entry["stop_symbol_conflicts"] = dataset.stats.stop_symbol_conflicts;
    datasets_json.push_back(std::move(entry));
    all_records.push_back(std::move(dataset.records));
    cut_indices.push_back(i);
  }

  if (budget > 0) {
    try {
      all_records = curation::equalize_token_budget(std::move(all_records), budget, seed);
    } catch (const curation::InsufficientTokensError& e) {
      std::cerr << "budget error: " << e.what() << "\n";
      return kExitRuntime;
    }
  }

  for (size_t d = 0; d < all_records.size(); ++d) {
    std::vector<storage::Record> out;
    long long tokens = 0;
    for (const auto& record : all_records[d]) {
      storage::Record rec;
      rec["schema"] = storage::kSchemaVersion;
      rec["kind"] = "sft_record";
      rec["problem_id"] = record.problem_id;
      rec["cut_index"] = record.cut_index;
      rec["prompt"] = record.prompt;
      rec["response"] = record.response;
      rec["source_rollout_id"] = record.source_rollout_id;
      rec["token_count"] = record.token_count.value;
      rec["counting_mode"] = to_string(record.token_count.mode);
      rec["cut_candidate_value"] = record.cut_candidate_value;
      rec["final_answer"] = record.final_answer;
      out.push_back(std::move(rec));
      tokens += record.token_count.value;
    }
    fs::path file = out_dir / ("cut_at_" + std::to_string(cut_indices[d]) + ".jsonl");
    storage::save_corpus(file, out);
    datasets_json[d]["records_written"] = out.size();
    datasets_json[d]["tokens_written"] = tokens;
    datasets_json[d]["file"] = file.filename().string();
  }

  nlohmann::ordered_json manifest;
  manifest["schema"] = "v1";
  manifest["eligible_rollouts"] = eligible.size();
  manifest["stop_symbol"] = cfg.stop_symbol;
  manifest["seed"] = seed;
  manifest["counting_mode"] = to_string(options.counter.mode);
  manifest["token_count_rule"] = "prompt + response per record";
  manifest["continuation"] =
      continuations_path.empty() ? "generator endpoint (deterministic decoding)" : "scripted file";
  if (budget > 0) manifest["budget_tokens"] = budget;
  manifest["datasets"] = std::move(datasets_json);
  std::ofstream mf(out_dir / "curation_manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
  std::cout << "curated " << all_records.size() << " cut datasets under " << out_dir.string()
            << "\n";
  return kExitOk;
}

int cmd_curate_mixture(const config::ToolConfig& cfg, const fs::path& problems_path,
                       const fs::path& verified_path, const fs::path& out_dir, double ratio,
                       uint64_t seed) {
  auto problems = load_problems(problems_path);
  // Group verified rollouts per problem, pick one corrective and one
  // confirmatory-only rollout each (first by rollout id).
  std::map<std::string, curation::PairedRollouts> paired;
  for (const auto& rec : load_or_throw(verified_path)) {
    analysis::AnalyzedRollout ar = analyzed_from_record(rec);
    auto pit = problems.find(ar.rollout.problem_id);
    if (pit == problems.end()) continue;
    auto& pair = paired[pit->second.id];
    pair.problem = pit->second;
    if (curation::contains_corrective(ar.transitions)) {
      if (!pair.corrective || ar.rollout.id < pair.corrective->id)
        pair.corrective = ar.rollout;
    } else if (!ar.transitions.empty() && curation::all_tt(ar.transitions)) {
      if (!pair.confirmatory || ar.rollout.id < pair.confirmatory->id)
        pair.confirmatory = ar.rollout;
    }
  }
  std::vector<curation::PairedRollouts> problems_with_pairs;
  for (auto& [id, pair] : paired) problems_with_pairs.push_back(std::move(pair));

  curation::MixtureSpec spec{ratio, seed};
  auto result = curation::build_corrective_mixture(problems_with_pairs, spec);

  fs::create_directories(out_dir);
  std::vector<storage::Record> out;
  for (const auto& entry : result.dataset) {
    storage::Record rec;
    rec["schema"] = storage::kSchemaVersion;
    rec["kind"] = "mixture_entry";
    rec["problem_id"] = entry.problem_id;
    rec["rollout_id"] = entry.rollout_id;
    rec["used_corrective"] = entry.used_corrective;
    out.push_back(std::move(rec));
  }
  fs::path file = out_dir / "mixture.jsonl";
  storage::save_corpus(file, out);

  nlohmann::ordered_json manifest;
  manifest["schema"] = "v1";
  manifest["corrective_ratio"] = ratio;
  manifest["seed"] = seed;
  manifest["problems"] = result.dataset.size();
  manifest["corrective_selected"] = result.corrective_count;
  manifest["excluded_missing_pair"] = result.excluded_problem_ids;
  manifest["pairing_rule"] =
      "corrective: rollout with at least one F->T transition; confirmatory: rollout whose "
      "transitions are all T->T; smallest rollout id wins per problem";
  manifest["stop_symbol"] = cfg.stop_symbol;
  std::ofstream mf(out_dir / "mixture_manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
  std::cout << "mixture of " << result.dataset.size() << " problems ("
            << result.corrective_count << " corrective) -> " << file.string() << "\n";
  return kExitOk;
}

int cmd_serve(const config::ToolConfig& cfg, const std::string& host, int port,
              const std::string& detector_mode) {
  if (!cfg.generator_llm) {
    std::cerr << "config error: serve needs a \"generator\" endpoint block (the upstream model)\n";
    return kExitConfig;
  }
  proxy::ProxyOptions options;
  options.upstream = cfg.generator_llm->resolve();
  options.policy = cfg.policy;
  options.counter = counter_for(cfg);
  options.listen_host = host;
  options.listen_port = port;

  std::unique_ptr<earlystop::DetectorClient> cad, qrc;
  if (detector_mode == "heuristic") {
    cad = std::make_unique<earlystop::HeuristicDetector>();
  } else if (detector_mode == "remote") {
    if (!cfg.cad) {
      std::cerr << "config error: remote detector mode needs a \"cad\" endpoint block\n";
      return kExitConfig;
    }
    cad = std::make_unique<earlystop::RemoteDetector>(cfg.cad->base_url);
  } else if (detector_mode != "off") {
    std::cerr << "unknown detector mode: " << detector_mode << " (heuristic|remote|off)\n";
    return kExitUsage;
  }
  if (cfg.qrc) qrc = std::make_unique<earlystop::RemoteDetector>(cfg.qrc->base_url);
  options.cad = cad.get();
  options.qrc = qrc.get();
  if (detector_mode == "off") options.policy.cad_threshold = 1.5;

  proxy::ProxyServer server(std::move(options));
  if (!server.start()) {
    std::cerr << "failed to bind " << host << ":" << port << "\n";
    return kExitRuntime;
  }
  std::cout << "proxy listening on " << host << ":" << server.port() << " (detector: "
            << detector_mode << ", budgets " << cfg.policy.budget_low << "/"
            << cfg.policy.budget_high << ")\n";
  std::cout << "POST /v1/chat/completions, GET /status; Ctrl-C to stop\n";
  // Serve until killed.
  while (true) std::this_thread::sleep_for(std::chrono::seconds(3600));
  return kExitOk;
}

struct PolicyFlag {
  std::string label;
  double cad_threshold = 0.5;
  double qrc_threshold = 0.05;
  bool use_qrc = false;
};

std::optional<PolicyFlag> parse_policy_flag(const std::string& s) {
  // label,cad_threshold[,qrc_threshold] — a missing qrc part means pure-CAD.
  PolicyFlag p;
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t comma = s.find(',', start);
    parts.push_back(s.substr(start, comma == std::string::npos ? std::string::npos
                                                               : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
  try {
    p.label = parts[0];
    p.cad_threshold = std::stod(parts[1]);
    if (parts.size() == 3) {
      p.qrc_threshold = std::stod(parts[2]);
      p.use_qrc = true;
    }
  } catch (...) {
    return std::nullopt;
  }
  return p;
}

int cmd_bench_desk(const config::ToolConfig& cfg, const fs::path& problems_path,
                   const fs::path& transcripts_path, const fs::path& out_dir,
                   const std::vector<std::string>& policy_flags) {
  auto problems = load_problems(problems_path);
  std::vector<bench::DeskTranscript> transcripts;
  for (const auto& rec : load_or_throw(transcripts_path))
    transcripts.push_back(bench::transcript_from_record(rec));

  std::vector<bench::BenchPolicy> policies;
  for (const std::string& flag : policy_flags) {
    auto parsed = parse_policy_flag(flag);
    if (!parsed) {
      std::cerr << "bad --policy value: " << flag
                << " (want label,cad_threshold[,qrc_threshold])\n";
      return kExitUsage;
    }
    bench::BenchPolicy bp;
    bp.label = parsed->label;
    bp.policy = cfg.policy;
    bp.policy.cad_threshold = parsed->cad_threshold;
    bp.policy.qrc_threshold = parsed->qrc_threshold;
    bp.use_qrc = parsed->use_qrc;
    policies.push_back(std::move(bp));
  }
  if (policies.empty()) {
    bench::BenchPolicy cad_only;
    cad_only.label = "detector";
    cad_only.policy = cfg.policy;
    policies.push_back(cad_only);
  }

  earlystop::HeuristicDetector cad;
  std::unique_ptr<earlystop::DetectorClient> qrc;
  if (cfg.qrc) qrc = std::make_unique<earlystop::RemoteDetector>(cfg.qrc->base_url);

  auto report = bench::run_bench_desk(problems, transcripts, policies, &cad, qrc.get(),
                                      counter_for(cfg));
  fs::create_directories(out_dir);
  {
    std::ofstream f(out_dir / "bench_report.csv", std::ios::trunc);
    f << bench::render_bench_csv(report);
  }
  {
    std::ofstream f(out_dir / "sweep.csv", std::ios::trunc);
    f << "label,cad_threshold,qrc_threshold,accuracy_drop_pp,token_reduction\n";
    for (const auto& p : bench::sweep_points(report, policies)) {
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%.4f,%.6f\n", p.label.c_str(),
                    p.cad_threshold, p.qrc_threshold, p.accuracy_drop, p.token_reduction);
      f << line;
    }
  }
  if (!report.rows.empty()) {
    const auto& avg = report.rows.back();
    for (const auto& arm : avg.variants)
      std::cout << arm.label << ": accuracy " << arm.accuracy << ", mean length "
                << arm.mean_length << " ("
                << analysis::signed_change_percent(avg.baseline.mean_length, arm.mean_length)
                << " vs baseline)\n";
  }
  if (report.skipped_problems > 0)
    std::cerr << "skipped " << report.skipped_problems
              << " transcripts without a matching problem (excluded from every arm)\n";
  std::cout << "bench report -> " << (out_dir / "bench_report.csv").string() << "\n";
  return kExitOk;
}

int cmd_bench_raw(const fs::path& raw_lengths_path) {
  std::ifstream in(raw_lengths_path);
  if (!in) {
    std::cerr << "input file not found: " << raw_lengths_path.string() << "\n";
    return kExitInput;
  }
  nlohmann::json fixture = nlohmann::json::parse(in, nullptr, false);
  if (fixture.is_discarded() || !fixture.contains("rows")) {
    std::cerr << "raw lengths file is not valid JSON with a rows array\n";
    return kExitInput;
  }
  auto rows = bench::raw_length_rows_from_json(fixture);
  auto rendered = bench::render_reduction_rows(rows);
  for (size_t i = 0; i < rendered.size(); ++i) {
    std::cout << rendered[i].label << " | " << rendered[i].baseline;
    for (const auto& cell : rendered[i].variants) std::cout << " | " << cell;
    std::cout << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reflection analysis, SFT curation, and early-stop proxying for reasoning rollouts"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")->envname("REFLENS_CONFIG");
  app.fallthrough();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "normalize raw rollout records into a corpus");
  std::string ingest_input, ingest_output, ingest_tag = "unknown";
  ingest->add_option("--input", ingest_input, "raw rollout JSONL")->required();
  ingest->add_option("--output", ingest_output, "corpus output path")->required();
  ingest->add_option("--generator-tag", ingest_tag, "tag for records missing one");

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "run the candidate extractor over a corpus");
  std::string ex_problems, ex_rollouts, ex_output, ex_template = "prompt1";
  int ex_retries = 2;
  extract_cmd->add_option("--problems", ex_problems)->required();
  extract_cmd->add_option("--rollouts", ex_rollouts)->required();
  extract_cmd->add_option("--output", ex_output)->required();
  extract_cmd->add_option("--template", ex_template, "prompt1|prompt2");
  extract_cmd->add_option("--max-retries", ex_retries);

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "classify transitions against gold answers");
  std::string vf_problems, vf_rollouts, vf_extractions, vf_output;
  verify_cmd->add_option("--problems", vf_problems)->required();
  verify_cmd->add_option("--rollouts", vf_rollouts)->required();
  verify_cmd->add_option("--extractions", vf_extractions)->required();
  verify_cmd->add_option("--output", vf_output)->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "aggregate a verified corpus into reports");
  std::string an_verified, an_out = "reports", an_group = "model,dataset";
  int an_bins = 20;
  analyze_cmd->add_option("--verified", an_verified)->required();
  analyze_cmd->add_option("--out-dir", an_out);
  analyze_cmd->add_option("--group-by", an_group, "none|model|dataset|model,dataset");
  analyze_cmd->add_option("--bins", an_bins, "histogram bins");

  // curate
  auto* curate_cmd = app.add_subcommand("curate", "build SFT datasets from verified rollouts");
  std::string cu_mode = "cut", cu_problems, cu_verified, cu_continuations, cu_out = "datasets";
  int cu_from = 1, cu_to = 6;
  long long cu_budget = 0;
  double cu_ratio = 0.5;
  uint64_t cu_seed = 0;
  bool cu_seed_set = false;
  curate_cmd->add_option("--mode", cu_mode, "cut|mixture");
  curate_cmd->add_option("--problems", cu_problems)->required();
  curate_cmd->add_option("--verified", cu_verified)->required();
  curate_cmd->add_option("--continuations", cu_continuations,
                         "scripted continuations JSONL (offline mode)");
  curate_cmd->add_option("--out-dir", cu_out);
  curate_cmd->add_option("--cut-from", cu_from);
  curate_cmd->add_option("--cut-to", cu_to);
  curate_cmd->add_option("--budget", cu_budget, "token budget for equalization (0: off)");
  curate_cmd->add_option("--ratio", cu_ratio, "corrective ratio for mixture mode");
  curate_cmd->add_option("--seed", cu_seed)->each([&](const std::string&) { cu_seed_set = true; });

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the early-stop streaming proxy");
  std::string sv_host = "127.0.0.1", sv_detector = "heuristic";
  int sv_port = 8799;
  serve_cmd->add_option("--host", sv_host);
  serve_cmd->add_option("--port", sv_port);
  serve_cmd->add_option("--detector", sv_detector, "heuristic|remote|off");

  // policy overrides (config provides defaults)
  double ov_cad = -1.0, ov_qrc = -1.0;
  int ov_budget_low = 0, ov_budget_high = 0, ov_max_final = 0;
  std::string ov_stop_symbol;
  auto add_policy_flags = [&](CLI::App* cmd) {
    cmd->add_option("--cad-threshold", ov_cad, "per-line detector threshold");
    cmd->add_option("--qrc-threshold", ov_qrc, "question controller threshold");
    cmd->add_option("--budget-low", ov_budget_low, "reflection budget without controller");
    cmd->add_option("--budget-high", ov_budget_high, "reflection budget granted by controller");
    cmd->add_option("--stop-symbol", ov_stop_symbol, "thinking terminator string");
    cmd->add_option("--max-final-tokens", ov_max_final, "cap on continuation tokens");
  };
  add_policy_flags(serve_cmd);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "token/accuracy trade-off benchmarking");
  std::string be_mode = "desk", be_problems, be_transcripts, be_out = "bench", be_raw;
  std::vector<std::string> be_policies;
  bench_cmd->add_option("--mode", be_mode, "desk|raw");
  bench_cmd->add_option("--problems", be_problems);
  bench_cmd->add_option("--transcripts", be_transcripts, "desk transcripts JSONL");
  bench_cmd->add_option("--out-dir", be_out);
  bench_cmd->add_option("--policy", be_policies,
                        "label,cad_threshold[,qrc_threshold]; repeatable");
  bench_cmd->add_option("--raw-lengths", be_raw, "render reductions from raw length columns");
  add_policy_flags(bench_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
      app.exit(e);
      return kExitOk;
    }
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  config::ToolConfig cfg;
  bool config_needed = extract_cmd->parsed() || curate_cmd->parsed() || serve_cmd->parsed() ||
                       bench_cmd->parsed();
  try {
    if (!config_path.empty())
      cfg = config::load_tool_config(config_path);
    else if (extract_cmd->parsed() || serve_cmd->parsed()) {
      std::cerr << "config error: this subcommand needs --config\n";
      return kExitConfig;
    }
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  (void)config_needed;
  if (cu_seed_set) cfg.seed = cu_seed;
  if (ov_cad >= 0.0) cfg.policy.cad_threshold = ov_cad;
  if (ov_qrc >= 0.0) cfg.policy.qrc_threshold = ov_qrc;
  if (ov_budget_low > 0) cfg.policy.budget_low = ov_budget_low;
  if (ov_budget_high > 0) cfg.policy.budget_high = ov_budget_high;
  if (ov_max_final > 0) cfg.policy.max_final_answer_tokens = ov_max_final;
  if (!ov_stop_symbol.empty()) {
    cfg.stop_symbol = ov_stop_symbol;
    cfg.policy.stop_symbol = ov_stop_symbol;
  }
  if (cfg.policy.budget_low < 1 || cfg.policy.budget_high < cfg.policy.budget_low) {
    std::cerr << "budgets must satisfy 1 <= budget_low <= budget_high\n";
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_input, ingest_output, ingest_tag);
    if (extract_cmd->parsed()) {
      auto tpl = ex_template == "prompt2" ? extract::PromptTemplate::Prompt2
                                          : extract::PromptTemplate::Prompt1;
      if (ex_template != "prompt1" && ex_template != "prompt2") {
        std::cerr << "unknown template: " << ex_template << "\n";
        return kExitUsage;
      }
      return cmd_extract(cfg, ex_problems, ex_rollouts, ex_output, tpl, ex_retries);
    }
    if (verify_cmd->parsed()) return cmd_verify(vf_problems, vf_rollouts, vf_extractions, vf_output);
    if (analyze_cmd->parsed()) return cmd_analyze(an_verified, an_out, an_group, an_bins);
    if (curate_cmd->parsed()) {
      if (cu_mode == "cut")
        return cmd_curate_cut(cfg, cu_problems, cu_verified, cu_continuations, cu_out, cu_from,
                              cu_to, cu_budget, cfg.seed);
      if (cu_mode == "mixture")
        return cmd_curate_mixture(cfg, cu_problems, cu_verified, cu_out, cu_ratio, cfg.seed);
      std::cerr << "unknown curate mode: " << cu_mode << "\n";
      return kExitUsage;
    }
    if (serve_cmd->parsed()) return cmd_serve(cfg, sv_host, sv_port, sv_detector);
    if (bench_cmd->parsed()) {
      if (be_mode == "raw" || !be_raw.empty()) return cmd_bench_raw(be_raw);
      if (be_mode == "desk") {
        if (be_problems.empty() || be_transcripts.empty()) {
          std::cerr << "bench desk mode needs --problems and --transcripts\n";
          return kExitUsage;
        }
        return cmd_bench_desk(cfg, be_problems, be_transcripts, be_out, be_policies);
      }
      std::cerr << "unknown bench mode: " << be_mode << "\n";
      return kExitUsage;
    }
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const storage::StorageError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

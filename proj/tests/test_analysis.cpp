#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "reflens/analysis.hpp"
#include "reflens/verifier.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"

using namespace reflens;
using namespace reflens::analysis;

namespace {

AnalyzedRollout with_transitions(testsupport::PlantedRollout planted) {
  planted.analyzed.transitions =
      verify::classify_rollout(planted.analyzed.candidates, planted.analyzed.gold_answer);
  return planted.analyzed;
}

}  // namespace

TEST_CASE("transition_breakdown counts per kind") {
  DetRng rng(1);
  // ids 1,1,1,2? plant [1,1,1] -> TT,TT ; add an FT via [2,1]
  auto a = with_transitions(testsupport::plant_rollout(rng, "a", {1, 1, 1, 2, 1}));
  std::vector<AnalyzedRollout> corpus = {a};
  auto breakdown = transition_breakdown(corpus, GroupBy::None);
  REQUIRE(breakdown.size() == 1);
  CHECK(breakdown[0].count(TransitionKind::TT) == 2);
  CHECK(breakdown[0].count(TransitionKind::TF) == 1);
  CHECK(breakdown[0].count(TransitionKind::FT) == 1);
  CHECK(breakdown[0].total == 4);
  double fraction_sum = 0.0;
  for (auto k : {TransitionKind::TT, TransitionKind::FF_SAME, TransitionKind::FT,
                 TransitionKind::FF_DIFF, TransitionKind::TF})
    fraction_sum += breakdown[0].fraction(k);
  CHECK(fraction_sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("transition_breakdown reproduces planted counts and partitions by group") {
  DetRng rng(99);
  std::vector<AnalyzedRollout> corpus;
  std::vector<std::vector<TransitionKind>> expected_kinds;
  for (int i = 0; i < 500; ++i) {
    auto ids = testsupport::random_value_ids(rng, 1 + int(rng.next_below(6)));
    auto planted = testsupport::plant_rollout(
        rng, "r" + std::to_string(i), ids, i % 2 ? "model-a" : "model-b",
        i % 3 ? "set-1" : "set-2");
    expected_kinds.push_back(testsupport::oracle_classify(planted.correct, planted.value_ids));
    corpus.push_back(with_transitions(std::move(planted)));
  }
  auto expected_counts = testsupport::oracle_kind_counts(expected_kinds);

  auto whole = transition_breakdown(corpus, GroupBy::None);
  REQUIRE(whole.size() == 1);
  long long expected_total = 0;
  for (auto& [kind, count] : expected_counts) {
    CHECK(whole[0].count(kind) == count);
    expected_total += count;
  }
  CHECK(whole[0].total == expected_total);

  // Per-group totals sum to the corpus total.
  auto grouped = transition_breakdown(corpus, GroupBy::ModelAndDataset);
  long long grouped_total = 0;
  for (const auto& g : grouped) grouped_total += g.total;
  CHECK(grouped_total == whole[0].total);
}

TEST_CASE("transition_breakdown on an empty corpus") {
  std::vector<AnalyzedRollout> corpus;
  CHECK(transition_breakdown(corpus, GroupBy::None).empty());
  CHECK(first_position_histogram(corpus, 10).counted == 0);
}

TEST_CASE("first_position_histogram point mass and degenerate binning") {
  DetRng rng(3);
  std::vector<AnalyzedRollout> corpus;
  for (int i = 0; i < 50; ++i) {
    auto planted = testsupport::plant_rollout(rng, "r" + std::to_string(i), {1});
    auto& ar = planted.analyzed;
    // Move the single candidate to the last line: relative position 1.0.
    ar.candidates[0].step_index = ar.rollout.line_count();
    corpus.push_back(with_transitions(std::move(planted)));
  }
  auto h = first_position_histogram(corpus, 10);
  CHECK(h.counted == 50);
  CHECK(h.fractions.back() == doctest::Approx(1.0));

  auto single_bin = first_position_histogram(corpus, 1);
  CHECK(single_bin.fractions[0] == doctest::Approx(1.0));
}

TEST_CASE("first_position_histogram is near-uniform for uniform positions") {
  DetRng rng(0xF00D);
  std::vector<AnalyzedRollout> corpus;
  const int kLines = 200;
  std::string text;
  for (int i = 0; i < kLines; ++i) text += "line\n";
  text.pop_back();
  for (int i = 0; i < 10000; ++i) {
    AnalyzedRollout ar;
    ar.rollout = make_rollout("r" + std::to_string(i), "p", "m", text);
    ar.gold_answer = "1";
    Candidate c;
    c.order = 1;
    c.step_index = 1 + int(rng.next_below(kLines));
    c.value = "1";
    ar.candidates.push_back(c);
    corpus.push_back(std::move(ar));
  }
  auto h = first_position_histogram(corpus, 10);
  CHECK(h.counted == 10000);
  for (double f : h.fractions) CHECK(f == doctest::Approx(0.1).epsilon(0.15));

  // Zero-candidate rollouts are reported separately, never binned.
  corpus.push_back(AnalyzedRollout{make_rollout("zc", "p", "m", text), "1", {}, {}, "m", "d"});
  auto h2 = first_position_histogram(corpus, 10);
  CHECK(h2.zero_candidate_rollouts == 1);
  CHECK(h2.counted == 10000);
}

TEST_CASE("token_breakdown splits at the first candidate's line end") {
  TokenCounter counter = approximate_counter();

  Rollout r = make_rollout("r", "p", "m", "a b c\nd e");
  std::vector<Candidate> first_line = {{1, 1, "5", 1}};
  auto tb = token_breakdown(r, first_line, counter);
  CHECK(tb.tokens_to_first_candidate == 3);
  CHECK(tb.reflection_tokens == 2);

  // First candidate on the last line: no reflection tokens.
  std::vector<Candidate> last_line = {{1, 2, "5", 1}};
  auto tb2 = token_breakdown(r, last_line, counter);
  CHECK(tb2.reflection_tokens == 0);
  CHECK(tb2.tokens_to_first_candidate == 5);

  // Zero candidates: everything is pre-candidate.
  auto tb3 = token_breakdown(r, {}, counter);
  CHECK(tb3.tokens_to_first_candidate == 5);
  CHECK(tb3.reflection_tokens == 0);
}

TEST_CASE("approximate counter is additive across line splits") {
  DetRng rng(0xADD);
  TokenCounter counter = approximate_counter();
  for (int i = 0; i < 1000; ++i) {
    std::string text = testsupport::random_multiline_text(rng);
    Rollout r = make_rollout("r", "p", "m", text);
    int split_line = 1 + int(rng.next_below(uint64_t(r.line_count())));
    std::vector<Candidate> candidates = {{1, split_line, "v", 1}};
    auto tb = token_breakdown(r, candidates, counter);
    long long whole = counter.count(text);
    CHECK(tb.tokens_to_first_candidate + tb.reflection_tokens == whole);
    CHECK(whole == testsupport::oracle_word_count(text));
  }
}

TEST_CASE("first_vs_final_accuracy on constructed frequencies") {
  // 1000 rollouts: 812 correct-first, 847 correct-final, mirroring a
  // published per-model average pair (81.2, 84.7).
  DetRng rng(0xACC);
  std::vector<AnalyzedRollout> corpus;
  for (int i = 0; i < 1000; ++i) {
    bool first_ok = i < 812;
    bool final_ok = i < 847;
    AnalyzedRollout ar;
    ar.rollout = make_rollout("r" + std::to_string(i), "p", "m", "one line of thought");
    ar.gold_answer = "1";
    ar.candidates.push_back(Candidate{1, 1, first_ok ? "1" : "2", 1});
    ar.rollout.final_answer = final_ok ? "1" : "2";
    corpus.push_back(std::move(ar));
  }
  auto pairs = first_vs_final_accuracy(corpus, GroupBy::None);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].first_accuracy == doctest::Approx(0.812));
  CHECK(pairs[0].final_accuracy == doctest::Approx(0.847));
  CHECK(pairs[0].n == 1000);
}

TEST_CASE("first_vs_final_accuracy: all-correct corpus and recount oracle") {
  DetRng rng(0xCAFE);
  std::vector<AnalyzedRollout> corpus;
  long long expect_first = 0, expect_final = 0;
  for (int i = 0; i < 10000; ++i) {
    int n = int(rng.next_below(5));
    auto planted = testsupport::plant_rollout(rng, "r" + std::to_string(i),
                                              testsupport::random_value_ids(rng, n));
    // Recount independently from the planted flags.
    if (!planted.correct.empty() && planted.correct.front()) ++expect_first;
    if (!planted.correct.empty() && planted.correct.back()) ++expect_final;
    corpus.push_back(with_transitions(std::move(planted)));
  }
  auto pairs = first_vs_final_accuracy(corpus, GroupBy::None);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].first_accuracy == doctest::Approx(double(expect_first) / 10000.0));
  CHECK(pairs[0].final_accuracy == doctest::Approx(double(expect_final) / 10000.0));

  std::vector<AnalyzedRollout> all_correct;
  for (int i = 0; i < 50; ++i)
    all_correct.push_back(
        with_transitions(testsupport::plant_rollout(rng, "c" + std::to_string(i), {1, 1})));
  auto perfect = first_vs_final_accuracy(all_correct, GroupBy::None);
  CHECK(perfect[0].first_accuracy == doctest::Approx(1.0));
  CHECK(perfect[0].final_accuracy == doctest::Approx(1.0));
}

TEST_CASE("explicit final_answer takes precedence over the last candidate") {
  AnalyzedRollout ar;
  ar.rollout = make_rollout("r", "p", "m", "text");
  ar.gold_answer = "1";
  ar.candidates.push_back(Candidate{1, 1, "2", 1});  // wrong last candidate
  ar.rollout.final_answer = "1";                     // correct explicit final
  CHECK(final_answer_correct(ar));
  ar.rollout.final_answer.reset();
  CHECK_FALSE(final_answer_correct(ar));
}

TEST_CASE("p_f_to_t arithmetic and undefined case") {
  std::vector<TransitionKind> mixed = {TransitionKind::FT, TransitionKind::FF_SAME};
  CHECK(*p_f_to_t(std::span<const TransitionKind>(mixed)) == doctest::Approx(0.5));

  std::vector<TransitionKind> confirmatory = {TransitionKind::TT, TransitionKind::TT};
  CHECK_FALSE(p_f_to_t(std::span<const TransitionKind>(confirmatory)).has_value());
}

TEST_CASE("p_f_to_t matches brute-force conditional frequency") {
  DetRng rng2(0x1F2);
  for (int round = 0; round < 200; ++round) {
    std::vector<TransitionKind> kinds;
    int n = int(rng2.next_below(40));
    for (int i = 0; i < n; ++i)
      kinds.push_back(static_cast<TransitionKind>(rng2.next_below(5)));
    auto lib = p_f_to_t(std::span<const TransitionKind>(kinds));
    auto oracle = testsupport::oracle_p_f_to_t(kinds);
    CHECK(lib.has_value() == oracle.has_value());
    if (lib && oracle) CHECK(*lib == doctest::Approx(*oracle));
  }
}

TEST_CASE("candidates_per_rollout means") {
  DetRng rng(11);
  std::vector<AnalyzedRollout> corpus;
  corpus.push_back(with_transitions(testsupport::plant_rollout(rng, "a", {1, 2, 1})));
  corpus.push_back(
      with_transitions(testsupport::plant_rollout(rng, "b", {1, 2, 1, 1, 3})));
  auto stats = candidates_per_rollout(corpus, GroupBy::None);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].mean == doctest::Approx(4.0));

  std::vector<AnalyzedRollout> lone;
  lone.push_back(with_transitions(testsupport::plant_rollout(rng, "c", {})));
  CHECK(candidates_per_rollout(lone, GroupBy::None)[0].mean == doctest::Approx(0.0));
}

TEST_CASE("signed_change_percent renders published reductions from raw columns") {
  CHECK(signed_change_percent(15125, 10601) == "-29.9%");
  CHECK(signed_change_percent(15125, 11414) == "-24.5%");
  CHECK(signed_change_percent(100, 100) == "+0.0%");
  CHECK(reduction_fraction(15125, 11414) == doctest::Approx(3711.0 / 15125.0));
}

TEST_CASE("emit_report writes deterministic files") {
  DetRng rng(0xE1117);
  std::vector<AnalyzedRollout> corpus;
  for (int i = 0; i < 40; ++i)
    corpus.push_back(with_transitions(testsupport::plant_rollout(
        rng, "r" + std::to_string(i), testsupport::random_value_ids(rng, 1 + int(rng.next_below(4))),
        i % 2 ? "model-a" : "model-b", "set-1")));

  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "reflens_report_test";
  fs::remove_all(dir);
  ReportOptions options;
  auto files = emit_report(corpus, dir, options);
  CHECK(files.size() == 7);
  for (const auto& f : files) CHECK(fs::exists(f));

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::string first = slurp(dir / "transition_breakdown.csv");
  emit_report(corpus, dir, options);
  CHECK(slurp(dir / "transition_breakdown.csv") == first);
  CHECK(first.find("model-a") != std::string::npos);
  fs::remove_all(dir);
}

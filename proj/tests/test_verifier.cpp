#include <doctest.h>

#include <fstream>

#include "json.hpp"
#include "reflens/verifier.hpp"
#include "support/gen.hpp"
#include "support/oracles.hpp"

using namespace reflens;
using namespace reflens::verify;

TEST_CASE("normalize parses target forms") {
  CHECK(normalize("84/126").kind == AnswerKind::Rational);
  CHECK(normalize("84/126").text == "2/3");
  CHECK(normalize("456").kind == AnswerKind::Integer);
  CHECK(normalize("456").text == "456");
  CHECK(normalize("  \\boxed{7} ").kind == AnswerKind::Integer);
  CHECK(normalize("  \\boxed{7} ").text == "7");
  CHECK(normalize("0456").text == "456");
  CHECK(normalize("1,234").text == "1234");
  CHECK(normalize("+5").text == "5");
  CHECK(normalize("7.50").text == "7.5");
  CHECK(normalize("7.0").kind == AnswerKind::Decimal);
  CHECK(normalize(".5").text == "0.5");
  CHECK(normalize("5.").text == "5.0");
  CHECK(normalize("4/2").kind == AnswerKind::Integer);
  CHECK(normalize("4/2").text == "2");
  CHECK(normalize("-8").text == "-8");
  CHECK(normalize("so x").kind == AnswerKind::Symbolic);
  CHECK(normalize("No  Solution").text == "no solution");
}

TEST_CASE("rationals are stored in lowest terms with positive denominator") {
  auto a = normalize("84/126");
  CHECK(int(a.num) == 2);
  CHECK(int(a.den) == 3);
  auto b = normalize("2/-3");
  CHECK(int(b.num) == -2);
  CHECK(int(b.den) == 3);
}

TEST_CASE("equivalent: paper micro-example forms") {
  CHECK(equivalent("2/3", "84/126"));
  CHECK(equivalent("7", "7.0"));
  CHECK_FALSE(equivalent("123456", "456"));
  CHECK_FALSE(equivalent("1002003", "6"));
}

TEST_CASE("equivalent: decimal tolerance applies only near-exactly") {
  CHECK(equivalent("0.3333333333", "1/3"));
  CHECK_FALSE(equivalent("0.333", "1/3"));
  CHECK(equivalent("7.0000000001", "7"));
  CHECK_FALSE(equivalent("7.1", "7"));
  // No tolerance without a decimal literal involved.
  CHECK_FALSE(equivalent("1000000000", "1000000001"));
}

TEST_CASE("equivalent reflexivity and symmetry over a fuzz corpus") {
  DetRng rng(0xC0FFEE);
  auto random_answer = [&]() -> std::string {
    switch (rng.next_below(6)) {
      case 0: return std::to_string(int64_t(rng.next_below(100000)) - 50000);
      case 1:
        return std::to_string(rng.next_below(500)) + "/" + std::to_string(1 + rng.next_below(500));
      case 2:
        return std::to_string(rng.next_below(100)) + "." + std::to_string(rng.next_below(10000));
      case 3: return testsupport::random_line(rng);
      case 4: return "\\boxed{" + std::to_string(rng.next_below(1000)) + "}";
      default: {
        std::string s;
        for (int i = 0; i < 6; ++i) s.push_back(char('!' + rng.next_below(90)));
        return s;
      }
    }
  };
  for (int i = 0; i < 10000; ++i) {
    std::string a = random_answer();
    std::string b = random_answer();
    CHECK(equivalent(a, a));
    CHECK(equivalent(a, b) == equivalent(b, a));
  }
}

TEST_CASE("normalization is idempotent on rendered canonical forms") {
  DetRng rng(0xBEEF);
  auto inputs = std::vector<std::string>{"84/126", "7.50",  "0456", "\\boxed{3/9}",
                                         "No  Solution", "-0.0", "x+1",  "$12$"};
  for (int i = 0; i < 2000; ++i)
    inputs.push_back(std::to_string(int64_t(rng.next_below(1000))) + "/" +
                     std::to_string(1 + rng.next_below(1000)));
  for (const std::string& input : inputs) {
    CanonicalAnswer once = normalize(input);
    CanonicalAnswer twice = normalize(render(once));
    CHECK(twice == once);
  }
}

TEST_CASE("classify_transition: definitional examples") {
  Candidate prev{1, 3, "5", 1}, cur{2, 7, "5", 1};
  CHECK(classify_transition(prev, cur, "5") == TransitionKind::TT);
  Candidate wrong{1, 3, "4", 1}, right{2, 7, "5", 1};
  CHECK(classify_transition(wrong, right, "5") == TransitionKind::FT);
}

TEST_CASE("classify_transition matches the truth-table oracle exhaustively") {
  // All combinations of prev/cur correctness and value equality. Gold is "1";
  // value ids map to distinct wrong values.
  for (bool prev_correct : {false, true}) {
    for (bool cur_correct : {false, true}) {
      for (bool same_value : {false, true}) {
        if (prev_correct && cur_correct && !same_value) continue;  // unreachable with one gold
        if (prev_correct != cur_correct && same_value) continue;   // contradictory
        std::string prev_value = prev_correct ? "1" : "2";
        std::string cur_value = cur_correct ? "1" : (same_value ? "2" : "3");
        Candidate prev{1, 1, prev_value, 1}, cur{2, 2, cur_value, 1};
        CHECK(classify_transition(prev, cur, "1") ==
              testsupport::oracle_transition(prev_correct, cur_correct, same_value));
      }
    }
  }
}

TEST_CASE("classify_rollout length and pairwise behavior") {
  CHECK(classify_rollout(std::vector<Candidate>{}, "1").empty());
  CHECK(classify_rollout(std::vector<Candidate>{{1, 1, "1", 1}}, "1").empty());

  std::vector<Candidate> seq = {{1, 1, "1", 1}, {2, 2, "2", 1}, {3, 3, "1", 1}};
  auto transitions = classify_rollout(seq, "1");
  REQUIRE(transitions.size() == 2);
  CHECK(transitions[0].kind == TransitionKind::TF);
  CHECK(transitions[1].kind == TransitionKind::FT);
  CHECK(transitions[0].from_order == 1);
  CHECK(transitions[0].to_order == 2);
}

TEST_CASE("classify_rollout agrees with the oracle over 10,000 synthetic rollouts") {
  DetRng rng(0x5EED);
  for (int i = 0; i < 10000; ++i) {
    int n = static_cast<int>(rng.next_below(6));
    auto ids = testsupport::random_value_ids(rng, n);
    auto planted = testsupport::plant_rollout(rng, "r" + std::to_string(i), ids);
    auto transitions = classify_rollout(planted.analyzed.candidates, "1");
    auto expected = testsupport::oracle_classify(planted.correct, planted.value_ids);
    REQUIRE(transitions.size() == expected.size());
    for (size_t j = 0; j < expected.size(); ++j) CHECK(transitions[j].kind == expected[j]);
  }
}

TEST_CASE("value-stable rollouts yield only confirmatory transitions") {
  DetRng rng(0x1234);
  for (int i = 0; i < 200; ++i) {
    int n = 2 + static_cast<int>(rng.next_below(5));
    int value = 1 + static_cast<int>(rng.next_below(3));
    std::vector<int> ids(static_cast<size_t>(n), value);
    auto planted = testsupport::plant_rollout(rng, "r" + std::to_string(i), ids);
    for (const Transition& t : classify_rollout(planted.analyzed.candidates, "1"))
      CHECK(is_confirmatory(t.kind));
  }
}

TEST_CASE("shipped conformance vectors pass") {
  std::ifstream in(std::string(REFLENS_DATA_DIR) + "/verifier_conformance.jsonl");
  REQUIRE(in.good());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line);
    ++rows;
    std::string a = rec["a"].get<std::string>();
    std::string b = rec["b"].get<std::string>();
    CAPTURE(a);
    CAPTURE(b);
    CHECK(equivalent(a, b) == rec["equivalent"].get<bool>());
  }
  CHECK(rows >= 30);
}

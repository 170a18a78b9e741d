#include <doctest.h>

#include "reflens/rollout.hpp"
#include "support/gen.hpp"

using namespace reflens;

TEST_CASE("split_into_steps splits on newlines with 1-based indices") {
  auto steps = split_into_steps("a\nb\nc");
  REQUIRE(steps.size() == 3);
  CHECK(steps[0] == Step{1, "a"});
  CHECK(steps[1] == Step{2, "b"});
  CHECK(steps[2] == Step{3, "c"});
}

TEST_CASE("split_into_steps single line") {
  auto steps = split_into_steps("a");
  REQUIRE(steps.size() == 1);
  CHECK(steps[0] == Step{1, "a"});
}

TEST_CASE("split_into_steps rejects empty input") {
  CHECK_THROWS_AS(split_into_steps(""), EmptyRolloutError);
  CHECK_THROWS_AS(split_into_steps("\r"), EmptyRolloutError);
}

TEST_CASE("split_into_steps strips carriage returns before splitting") {
  auto steps = split_into_steps("a\r\nb\r");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].text == "a");
  CHECK(steps[1].text == "b");
}

TEST_CASE("empty lines keep their step numbers") {
  auto steps = split_into_steps("a\n\nb\n");
  REQUIRE(steps.size() == 4);
  CHECK(steps[1].text == "");
  CHECK(steps[3].text == "");
  CHECK(steps[3].index == 4);
}

TEST_CASE("step round-trip over random texts") {
  DetRng rng(0xA11CE);
  for (int i = 0; i < 1000; ++i) {
    std::string text = testsupport::random_multiline_text(rng);
    auto steps = split_into_steps(text);
    std::vector<std::string> lines;
    for (const Step& s : steps) {
      CHECK(s.text.find('\n') == std::string::npos);
      lines.push_back(s.text);
    }
    CHECK(join_lines(lines) == text);
    for (size_t j = 0; j < steps.size(); ++j) CHECK(steps[j].index == int(j) + 1);
  }
}

TEST_CASE("relative_position") {
  Rollout one_liner = make_rollout("r", "p", "m", "only line");
  Candidate c1{1, 1, "5", 1};
  CHECK(relative_position(c1, one_liner) == doctest::Approx(1.0));

  std::string hundred;
  for (int i = 0; i < 100; ++i) hundred += "line\n";
  hundred.pop_back();
  Rollout big = make_rollout("r2", "p", "m", hundred);
  Candidate c50{1, 50, "5", 1};
  CHECK(relative_position(c50, big) == doctest::Approx(0.5));
}

TEST_CASE("relative_position stays in (0,1] and is monotone in step_index") {
  DetRng rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string text = testsupport::random_multiline_text(rng);
    Rollout r = make_rollout("r", "p", "m", text);
    double prev = 0.0;
    for (int idx = 1; idx <= r.line_count(); ++idx) {
      Candidate c{1, idx, "v", 1};
      double pos = relative_position(c, r);
      CHECK(pos > 0.0);
      CHECK(pos <= 1.0);
      CHECK(pos > prev);
      prev = pos;
    }
  }
}

TEST_CASE("first and final candidate") {
  CHECK(first_candidate({}) == nullptr);
  CHECK(final_candidate({}) == nullptr);

  std::vector<Candidate> one = {{1, 3, "x", 1}};
  CHECK(first_candidate(one) == &one[0]);
  CHECK(final_candidate(one) == &one[0]);

  std::vector<Candidate> three = {{1, 2, "a", 1}, {2, 5, "b", 1}, {3, 9, "c", 1}};
  CHECK(first_candidate(three)->order == 1);
  CHECK(final_candidate(three)->order == 3);
}

TEST_CASE("candidate ordering by (step_index, same_line_rank) matches order") {
  std::vector<Candidate> good = {{1, 2, "a", 1}, {2, 2, "b", 2}, {3, 5, "c", 1}};
  CHECK(candidates_well_formed(good, 6));

  std::vector<Candidate> gap = {{1, 2, "a", 1}, {3, 5, "c", 1}};
  CHECK_FALSE(candidates_well_formed(gap, 6));

  std::vector<Candidate> backwards = {{1, 5, "a", 1}, {2, 2, "b", 1}};
  CHECK_FALSE(candidates_well_formed(backwards, 6));

  std::vector<Candidate> out_of_range = {{1, 9, "a", 1}};
  CHECK_FALSE(candidates_well_formed(out_of_range, 6));

  std::vector<Candidate> bad_rank = {{1, 2, "a", 1}, {2, 2, "b", 3}};
  CHECK_FALSE(candidates_well_formed(bad_rank, 6));
}

TEST_CASE("make_rollout reconstructs raw_text from steps") {
  Rollout r = make_rollout("r", "p", "m", "x\r\ny\nz");
  std::vector<std::string> lines;
  for (const Step& s : r.steps) lines.push_back(s.text);
  CHECK(join_lines(lines) == r.raw_text);
  CHECK(r.raw_text == "x\ny\nz");
}

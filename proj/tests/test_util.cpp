#include <doctest.h>

#include <atomic>
#include <numeric>
#include <set>

#include "reflens/util.hpp"

using namespace reflens;

TEST_CASE("DetRng is deterministic and platform-independent by construction") {
  DetRng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());
  DetRng c(43);
  CHECK(DetRng(42).next() != c.next());
}

TEST_CASE("next_below stays in range and covers the range") {
  DetRng rng(7);
  std::set<uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    uint64_t v = rng.next_below(10);
    CHECK(v < 10);
    seen.insert(v);
  }
  CHECK(seen.size() == 10);
  CHECK(rng.next_below(0) == 0);
  CHECK(rng.next_below(1) == 0);
}

TEST_CASE("det_shuffle permutes deterministically") {
  std::vector<int> v1(50), v2(50);
  std::iota(v1.begin(), v1.end(), 0);
  std::iota(v2.begin(), v2.end(), 0);
  DetRng r1(9), r2(9);
  det_shuffle(v1, r1);
  det_shuffle(v2, r2);
  CHECK(v1 == v2);
  std::vector<int> sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
}

TEST_CASE("parallel_for_each visits every index exactly once") {
  const size_t n = 10000;
  std::vector<std::atomic<int>> hits(n);
  parallel_for_each(n, 8, [&](size_t i) { hits[i].fetch_add(1); });
  for (size_t i = 0; i < n; ++i) CHECK(hits[i].load() == 1);

  // Degenerate worker counts.
  std::atomic<int> count{0};
  parallel_for_each(5, 1, [&](size_t) { count.fetch_add(1); });
  parallel_for_each(0, 4, [&](size_t) { count.fetch_add(1000); });
  CHECK(count.load() == 5);
}

TEST_CASE("parallel_for_each propagates worker exceptions") {
  CHECK_THROWS_AS(
      parallel_for_each(100, 4,
                        [&](size_t i) {
                          if (i == 57) throw std::runtime_error("boom");
                        }),
      std::runtime_error);
}

TEST_CASE("string helpers") {
  CHECK(trim("  a b  ") == "a b");
  CHECK(trim("") == "");
  CHECK(strip_carriage_returns("a\r\nb\r") == "a\nb");
  CHECK(split_lines("a\nb") == std::vector<std::string>{"a", "b"});
  CHECK(split_lines("a\n") == std::vector<std::string>{"a", ""});
  CHECK(split_lines("") == std::vector<std::string>{""});
  CHECK(join_lines({"a", "", "b"}) == "a\n\nb");
  CHECK(to_lower("MiXeD") == "mixed");
  CHECK(starts_with("abcdef", "abc"));
  CHECK_FALSE(starts_with("ab", "abc"));
}

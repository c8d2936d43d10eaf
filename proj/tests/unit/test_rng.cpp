#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ceib/rng.hpp"
#include "doctest.h"

using ceib::Rng;

TEST_CASE("derive_seed is deterministic and tag-sensitive") {
  CHECK(ceib::derive_seed(42, 1) == ceib::derive_seed(42, 1));
  CHECK(ceib::derive_seed(42, 1) != ceib::derive_seed(42, 2));
  CHECK(ceib::derive_seed(42, 1) != ceib::derive_seed(43, 1));
}

TEST_CASE("same seed gives the same stream, different seeds diverge") {
  Rng a(7), b(7), c(8);
  bool diverged = false;
  for (int i = 0; i < 16; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) diverged = true;
  }
  CHECK(diverged);
}

TEST_CASE("uniform stays in [0, 1) and matches its moments") {
  Rng rng(1);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.05));
}

TEST_CASE("normal matches N(0, 1) moments") {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
    sum3 += x * x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(sum3 / n) < 0.1);  // symmetric
}

TEST_CASE("gumbel mean is the Euler constant") {
  Rng rng(3);
  const int n = 200000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += rng.gumbel();
  CHECK(sum / n == doctest::Approx(0.5772156649).epsilon(0.05));
}

TEST_CASE("bernoulli hits its rate") {
  Rng rng(4);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3) ? 1 : 0;
  CHECK(static_cast<double>(hits) / n == doctest::Approx(0.3).epsilon(0.03));
}

TEST_CASE("below is uniform over its range") {
  Rng rng(5);
  const int n = 100000;
  std::vector<int> counts(10, 0);
  for (int i = 0; i < n; ++i) ++counts[rng.below(10)];
  for (int c : counts) {
    CHECK(c > 9500);
    CHECK(c < 10500);
  }
  CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(9);
  a.shuffle(v);
  Rng b(9);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);

  std::vector<int> u(50);
  std::iota(u.begin(), u.end(), 0);
  Rng c(10);
  c.shuffle(u);
  CHECK(u != v);
}

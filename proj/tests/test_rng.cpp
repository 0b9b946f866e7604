#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "contextfed/rng.hpp"
#include "doctest.h"

using contextfed::Rng;

TEST_CASE("fnv1a64 reference values") {
  CHECK(contextfed::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(contextfed::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(contextfed::fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derive_seed separates coordinates") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a) {
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(contextfed::derive_seed(17, a, b));
  }
  CHECK(seen.size() == 400);
  CHECK(contextfed::derive_seed(1, 2, 3) == contextfed::derive_seed(1, 2, 3));
  CHECK(contextfed::derive_seed(1, 2, 3) != contextfed::derive_seed(1, 3, 2));
}

TEST_CASE("Rng is reproducible and matches mt19937_64") {
  Rng a(5), b(5);
  std::mt19937_64 ref(5);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x == ref());
  }
}

TEST_CASE("uniform and below stay in range") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.below(7) < 7);
  }
  CHECK(rng.below(1) == 0);
}

TEST_CASE("below is close to uniform") {
  Rng rng(3);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(5)];
  const double p = 0.2, sd = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) < 4 * sd);
}

TEST_CASE("normal has unit moments") {
  Rng rng(11);
  const int n = 40000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.03);
  CHECK(std::abs(s2 / n - 1.0) < 0.05);
}

TEST_CASE("shuffle permutes") {
  Rng rng(2);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  rng.shuffle(std::span<int>(w));
  CHECK(w != v);
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}

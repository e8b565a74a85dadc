#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "eventfuse/errors.hpp"
#include "eventfuse/metrics.hpp"
#include "eventfuse/numeric.hpp"
#include "oracles.hpp"

using namespace eventfuse;

TEST_CASE("perfect separation") {
  Vector p(4);
  p << 0.9, 0.8, 0.3, 0.2;
  const MetricReport m = evaluate(p, {1, 1, 0, 0});
  REQUIRE(m.auc.has_value());
  CHECK(*m.auc == 1.0);
  CHECK(m.acc == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.n_pos == 2);
  CHECK(m.n_neg == 2);
}

TEST_CASE("three of four concordant pairs") {
  Vector p(4);
  p << 0.9, 0.8, 0.3, 0.2;
  const MetricReport m = evaluate(p, {1, 0, 1, 0});
  REQUIRE(m.auc.has_value());
  CHECK(*m.auc == 0.75);
}

TEST_CASE("the published precision/recall pair is consistent with its F1") {
  const Scalar precision = 0.89;
  const Scalar recall = 0.96;
  const Scalar f1 = 2.0 * precision * recall / (precision + recall);
  CHECK(std::abs(f1 - 0.92) <= 0.005);
}

TEST_CASE("rank-based AUC equals the pairwise oracle exactly") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(199));
    Vector p(n);
    std::vector<int> y;
    for (Index i = 0; i < n; ++i) {
      // Coarse grid to force plenty of ties.
      p(i) = static_cast<Scalar>(rng.below(20)) / 20.0;
      y.push_back(static_cast<int>(rng.below(2)));
    }
    const MetricReport m = evaluate(p, y);
    const auto want = oracle::pairwise_auc(p, y);
    CHECK(m.auc.has_value() == want.has_value());
    if (want) {
      CHECK(*m.auc == *want);  // bit-for-bit
    }
  }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
  Rng rng(32);
  Vector p(50);
  std::vector<int> y;
  for (Index i = 0; i < 50; ++i) {
    p(i) = rng.uniform(0.01, 0.99);
    y.push_back(static_cast<int>(rng.below(2)));
  }
  Vector warped(50);
  for (Index i = 0; i < 50; ++i) {
    warped(i) = std::atan(5.0 * p(i));  // strictly increasing
  }
  CHECK(*evaluate(p, y).auc == *evaluate(warped, y).auc);
}

TEST_CASE("evaluate is permutation invariant") {
  Rng rng(33);
  Vector p(25);
  std::vector<int> y;
  for (Index i = 0; i < 25; ++i) {
    p(i) = rng.uniform(0.0, 1.0);
    y.push_back(static_cast<int>(rng.below(2)));
  }
  std::vector<Index> perm(25);
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(perm);
  Vector p2(25);
  std::vector<int> y2(25);
  for (Index i = 0; i < 25; ++i) {
    p2(i) = p(perm[static_cast<std::size_t>(i)]);
    y2[static_cast<std::size_t>(i)] =
        y[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const MetricReport a = evaluate(p, y);
  const MetricReport b = evaluate(p2, y2);
  CHECK(*a.auc == *b.auc);
  CHECK(a.acc == b.acc);
  CHECK(a.f1 == b.f1);
  CHECK(a.precision == b.precision);
  CHECK(a.recall == b.recall);
}

TEST_CASE("single-class labels report no AUC but keep the rest") {
  Vector p(3);
  p << 0.9, 0.6, 0.7;
  const MetricReport m = evaluate(p, {1, 1, 1});
  CHECK_FALSE(m.auc.has_value());
  CHECK(m.acc == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.n_neg == 0);
}

TEST_CASE("threshold comparisons use greater-or-equal") {
  Vector p(2);
  p << 0.5, 0.49999;
  const MetricReport m = evaluate(p, {1, 0}, 0.5);
  CHECK(m.acc == 1.0);
}

TEST_CASE("evaluate validates its inputs") {
  CHECK_THROWS_AS(evaluate(Vector(), {}), ArgumentError);
  Vector p(2);
  p << 0.1, 0.2;
  CHECK_THROWS_AS(evaluate(p, {1}), ArgumentError);
  CHECK_THROWS_AS(evaluate(p, {1, 2}), ArgumentError);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "covshape/rng.hpp"
#include "covshape/moments.hpp"
#include "covshape/stats.hpp"

using namespace covshape;
using Catch::Approx;

TEST_CASE("ks_two_sample degenerate and exact cases", "[stats]") {
  std::vector<double> a{0.3, 1.2, -0.5, 0.3};
  REQUIRE(stats::ks_two_sample(a, a) == Approx(0.0).margin(1e-15));
  REQUIRE(stats::ks_two_sample({0.0}, {1.0}) == Approx(1.0));
  REQUIRE_THROWS_AS(stats::ks_two_sample({}, {1.0}), std::invalid_argument);

  // hand-checked: F_a jumps at {0,1}, F_b at {0.5}; sup gap is 1/2 at 0
  REQUIRE(stats::ks_two_sample({0.0, 1.0}, {0.5, 0.5}) == Approx(0.5));
}

TEST_CASE("ks_two_sample of two standard normal samples sits below the 1% bar",
          "[stats]") {
  const std::size_t n = 10'000;
  int below = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    rng::NormalSampler normal(rng::derive_seed(777, "ks_normal", t));
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = normal();
    for (auto& v : b) v = normal();
    if (stats::ks_two_sample(a, b) < stats::ks_critical_value(0.01, n, n)) ++below;
  }
  REQUIRE(below >= trials - 1);  // 1% level, 20 trials
}

TEST_CASE("ks symmetry and monotone invariance", "[stats]") {
  rng::NormalSampler normal(4242);
  std::vector<double> a(500), b(700);
  for (auto& v : a) v = normal();
  for (auto& v : b) v = 0.3 + 1.7 * normal();
  const double d1 = stats::ks_two_sample(a, b);
  REQUIRE(stats::ks_two_sample(b, a) == Approx(d1).margin(1e-15));
  auto warp = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(0.5 * x) + x;  // strictly increasing
    return v;
  };
  REQUIRE(stats::ks_two_sample(warp(a), warp(b)) == Approx(d1).margin(1e-15));
}

TEST_CASE("one-sample ks against the exact normal CDF", "[stats]") {
  rng::NormalSampler normal(31337);
  std::vector<double> a(20'000);
  for (auto& v : a) v = normal();
  const double d = stats::ks_one_sample(a, [](double x) { return stats::normal_cdf(x); });
  REQUIRE(d < stats::ks_critical_value(0.01, a.size()));
}

TEST_CASE("kde closed-form mixture value and symmetry", "[stats]") {
  const auto density = stats::kde({-1.0, 1.0}, stats::BandwidthRule::Fixed(1.0));
  const double expected = std::exp(-0.5) / std::sqrt(2.0 * moments::kPi);
  REQUIRE(density(0.0) == Approx(expected).margin(1e-12));
  REQUIRE(density(0.7) == Approx(density(-0.7)).margin(1e-12));
  REQUIRE_THROWS_AS(stats::kde({1.0}, stats::BandwidthRule::Silverman()), std::invalid_argument);
  REQUIRE_THROWS_AS(stats::kde({1.0, 1.0, 1.0}, stats::BandwidthRule::Silverman()),
                    std::invalid_argument);
}

TEST_CASE("kde integrates to one and tracks the true density", "[stats]") {
  rng::NormalSampler normal(555);
  std::vector<double> sample(100'000);
  for (auto& v : sample) v = normal();
  const auto density = stats::kde(sample, stats::BandwidthRule::Silverman());

  double integral = 0.0, max_dev = 0.0;
  const double lo = -8.0, hi = 8.0;
  const int steps = 1600;
  double prev = density(lo);
  for (int i = 1; i <= steps; ++i) {
    const double x = lo + (hi - lo) * i / steps;
    const double cur = density(x);
    integral += 0.5 * (prev + cur) * (hi - lo) / steps;
    prev = cur;
    const double truth = std::exp(-0.5 * x * x) / std::sqrt(2.0 * moments::kPi);
    max_dev = std::max(max_dev, std::abs(cur - truth));
  }
  REQUIRE(integral == Approx(1.0).margin(1e-3));
  REQUIRE(max_dev < 0.02);
}

TEST_CASE("quantile paths bracket retained values and report exclusions", "[stats]") {
  // 5 paths, 3 times; path 3 excluded
  std::vector<std::vector<double>> values = {
      {1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {100, 100, 100}, {4, 4, 4}};
  std::vector<bool> excluded = {false, false, false, true, false};
  auto qp = stats::quantile_paths_impl(
      5, 3, excluded, [&](std::size_t p, std::size_t t) { return values[p][t]; },
      {0.0, 0.5, 1.0});
  REQUIRE(qp.excluded_count == 1);
  REQUIRE(qp.retained_count == 4);
  for (int t = 0; t < 3; ++t) {
    REQUIRE(qp.quantiles[0][t] == 1.0);   // min
    REQUIRE(qp.quantiles[1][t] == 2.0);   // nearest-rank median of {1,2,3,4}
    REQUIRE(qp.quantiles[2][t] == 4.0);   // max
  }
  std::vector<bool> all(5, true);
  REQUIRE_THROWS(stats::quantile_paths_impl(
      5, 3, all, [&](std::size_t p, std::size_t t) { return values[p][t]; }, {0.5}));
}

TEST_CASE("constant ensemble quantiles equal the constant", "[stats]") {
  auto qp = stats::quantile_paths_impl(
      7, 4, std::vector<bool>(7, false), [](std::size_t, std::size_t) { return 2.5; },
      {0.1, 0.5, 0.9});
  for (const auto& row : qp.quantiles)
    for (double v : row) REQUIRE(v == 2.5);
}

TEST_CASE("rate_fit recovers exact power laws and is scale invariant", "[stats]") {
  std::vector<double> xs{32, 64, 128, 256, 512};
  std::vector<double> ys(xs.size()), ys2(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ys[i] = std::pow(xs[i], -0.5);
    ys2[i] = 7.3 * std::pow(xs[i], -1.0);
  }
  auto fit = stats::rate_fit(xs, ys);
  REQUIRE(fit.slope == Approx(-0.5).margin(1e-12));
  REQUIRE(fit.residual_rms == Approx(0.0).margin(1e-12));
  REQUIRE(stats::rate_fit(xs, ys2).slope == Approx(-1.0).margin(1e-12));

  // scaling ys shifts the intercept only
  auto scaled = ys;
  for (auto& v : scaled) v *= 123.0;
  REQUIRE(stats::rate_fit(xs, scaled).slope == Approx(fit.slope).margin(1e-12));

  REQUIRE_THROWS_AS(stats::rate_fit({1, 2}, {1, 2}), std::invalid_argument);
  REQUIRE_THROWS_AS(stats::rate_fit({1, 2, -3}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("ecdf is a right-continuous step function", "[stats]") {
  stats::Ecdf ecdf({1.0, 2.0, 2.0, 3.0});
  REQUIRE(ecdf(0.5) == 0.0);
  REQUIRE(ecdf(1.0) == Approx(0.25));
  REQUIRE(ecdf(2.0) == Approx(0.75));
  REQUIRE(ecdf(2.5) == Approx(0.75));
  REQUIRE(ecdf(3.0) == Approx(1.0));
}

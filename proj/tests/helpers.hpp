#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "covshape/rng.hpp"

namespace testutil {

// Sample mean together with its standard error.
struct MeanWithError {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanWithError mean_with_error(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= (n - 1.0);
  return {m, std::sqrt(v / n)};
}

// Streaming accumulator for the Monte-Carlo oracles (avoids storing 1e7 values).
struct Accumulator {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++count;
  }
  double mean() const { return sum / static_cast<double>(count); }
  double se() const {
    const double n = static_cast<double>(count);
    const double var = (sum_sq - sum * sum / n) / (n - 1.0);
    return std::sqrt(var / n);
  }
};

// Correlated standard Gaussian pair (g, rho g + sqrt(1-rho^2) w).
struct GaussianPair {
  double g, gh;
};

inline GaussianPair correlated_pair(covshape::rng::NormalSampler& normal, double rho) {
  const double g = normal();
  const double w = normal();
  return {g, rho * g + std::sqrt(1.0 - rho * rho) * w};
}

}  // namespace testutil

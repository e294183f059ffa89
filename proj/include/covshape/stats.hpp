#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace covshape::stats {

// Empirical CDF over a sorted copy of the sample; evaluation is the
// right-continuous step function F(x) = #{values <= x} / size.
struct Ecdf {
  std::vector<double> sorted;

  explicit Ecdf(std::vector<double> values) : sorted(std::move(values)) {
    if (sorted.empty()) throw std::invalid_argument("empty sample");
    std::sort(sorted.begin(), sorted.end());
  }

  std::size_t size() const { return sorted.size(); }

  double operator()(double x) const {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
    return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
  }
};

// Exact two-sample Kolmogorov-Smirnov statistic, sup over the merged support.
inline double ks_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty sample");
  std::vector<double> sa(a), sb(b);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t ia = 0, ib = 0;
  double sup = 0.0;
  while (ia < sa.size() && ib < sb.size()) {
    const double x = std::min(sa[ia], sb[ib]);
    while (ia < sa.size() && sa[ia] <= x) ++ia;
    while (ib < sb.size() && sb[ib] <= x) ++ib;
    sup = std::max(sup, std::abs(ia / na - ib / nb));
  }
  return sup;
}

// One-sample KS against a continuous reference CDF.
inline double ks_one_sample(const std::vector<double>& sample,
                            const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("empty sample");
  std::vector<double> s(sample);
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    sup = std::max(sup, std::max(f - i / n, (i + 1) / n - f));
  }
  return sup;
}

// Asymptotic critical value: c(alpha) sqrt((n+m)/(n m)) two-sample, or
// c(alpha)/sqrt(n) one-sample (m = 0), with c(alpha) = sqrt(-ln(alpha/2)/2).
inline double ks_critical_value(double alpha, std::size_t n, std::size_t m = 0) {
  if (!(alpha > 0.0 && alpha < 1.0) || n == 0) throw std::invalid_argument("bad arguments");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  if (m == 0) return c / std::sqrt(static_cast<double>(n));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_cdf(double x, double mean, double variance) {
  return normal_cdf((x - mean) / std::sqrt(variance));
}

// Nearest-rank sample quantile: the ceil(q n)-th order statistic.
inline double nearest_rank_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("empty sample");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile outside [0, 1]");
  const double n = static_cast<double>(sorted.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(q * n));
  if (rank == 0) rank = 1;
  if (rank > sorted.size()) rank = sorted.size();
  return sorted[rank - 1];
}

// Gaussian kernel density estimate.
struct KdeDensity {
  std::vector<double> samples;
  double bandwidth = 0.0;

  double operator()(double x) const {
    const double inv = 1.0 / (bandwidth * std::sqrt(2.0 * 3.14159265358979323846));
    double acc = 0.0;
    for (double s : samples) {
      const double u = (x - s) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    return acc * inv / static_cast<double>(samples.size());
  }

  std::vector<double> evaluate(const std::vector<double>& grid) const {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = (*this)(grid[i]);
    return out;
  }
};

struct BandwidthRule {
  bool silverman = true;
  double fixed = 1.0;

  static BandwidthRule Silverman() { return BandwidthRule{true, 0.0}; }
  static BandwidthRule Fixed(double h) { return BandwidthRule{false, h}; }
};

inline KdeDensity kde(const std::vector<double>& samples, const BandwidthRule& rule) {
  if (samples.size() < 2) throw std::invalid_argument("need at least 2 samples");
  KdeDensity density;
  density.samples = samples;
  if (!rule.silverman) {
    if (!(rule.fixed > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
    density.bandwidth = rule.fixed;
    return density;
  }
  std::vector<double> s(samples);
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= (n - 1.0);
  const double sd = std::sqrt(var);
  const double iqr = nearest_rank_quantile(s, 0.75) - nearest_rank_quantile(s, 0.25);
  const double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw std::invalid_argument("zero spread: Silverman bandwidth undefined");
  density.bandwidth = 0.9 * spread * std::pow(n, -0.2);
  return density;
}

// Per-time empirical quantiles of a set of recorded paths, nearest-rank rule.
// `values(p, t)` supplies path p at time index t; paths flagged excluded are
// dropped entirely, with the count reported.
struct QuantilePaths {
  std::vector<double> probabilities;
  std::vector<std::vector<double>> quantiles;  // [q][time]
  std::size_t excluded_count = 0;
  std::size_t retained_count = 0;
};

template <typename Values>
QuantilePaths quantile_paths_impl(std::size_t n_paths, std::size_t n_times,
                                  const std::vector<bool>& excluded, Values&& values,
                                  const std::vector<double>& qs) {
  QuantilePaths out;
  out.probabilities = qs;
  out.quantiles.assign(qs.size(), std::vector<double>(n_times, 0.0));
  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < n_paths; ++p)
    if (!excluded[p]) keep.push_back(p);
  out.excluded_count = n_paths - keep.size();
  out.retained_count = keep.size();
  if (keep.empty()) throw std::runtime_error("all paths excluded");
  std::vector<double> column(keep.size());
  for (std::size_t t = 0; t < n_times; ++t) {
    for (std::size_t i = 0; i < keep.size(); ++i) column[i] = values(keep[i], t);
    std::sort(column.begin(), column.end());
    for (std::size_t qi = 0; qi < qs.size(); ++qi)
      out.quantiles[qi][t] = nearest_rank_quantile(column, qs[qi]);
  }
  return out;
}

// Ordinary least squares in log-log coordinates: returns slope, intercept and
// the RMS residual.  Rejects non-positive inputs.
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

inline RateFit rate_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 3)
    throw std::invalid_argument("need >= 3 paired points");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw std::invalid_argument("inputs must be positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    rss += e * e;
  }
  fit.residual_rms = std::sqrt(rss / static_cast<double>(n));
  return fit;
}

}  // namespace covshape::stats

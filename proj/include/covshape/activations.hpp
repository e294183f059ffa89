#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>

#include "covshape/gauss_hermite.hpp"
#include "covshape/moments.hpp"

namespace covshape::activations {

using moments::SlopePair;

// Two-slope family with width-dependent slopes s+- = 1 + c+- / n^p.
// exponent_p = 0 keeps a fixed activation; p = 1/2 is the critical scaling.
struct ReluLikeSpec {
  double c_plus = 0.0;
  double c_minus = 0.0;
  double exponent_p = 0.5;

  SlopePair slopes_at(long n) const {
    if (n < 1) throw std::invalid_argument("width must be >= 1");
    const double scale = std::pow(static_cast<double>(n), exponent_p);
    return SlopePair{1.0 + c_plus / scale, 1.0 + c_minus / scale};
  }
};

// Smooth activation phi normalized to phi(0) = 0, phi'(0) = 1, shaped at
// width n as phi_s(x) = s phi(x/s) with s = a n^p.  Callers supply the local
// derivative data; consistency with the evaluator is validated, not derived.
struct SmoothSpec {
  double second_deriv = 0.0;       // phi''(0)
  double third_deriv = 0.0;        // phi'''(0)
  double a = 1.0;                  // shape amplitude, > 0
  double exponent_p = 0.5;         // width-scaling exponent, > 0
  std::function<double(double)> evaluator;
  std::string name = "custom";

  double scale_at(long n) const {
    if (n < 1) throw std::invalid_argument("width must be >= 1");
    if (a <= 0.0) throw std::invalid_argument("shape amplitude a must be > 0");
    return a * std::pow(static_cast<double>(n), exponent_p);
  }
};

struct StabilityReport {
  double b = 0.0;        // 3/4 phi''(0)^2 + phi'''(0)
  bool explodes = false; // true iff b > 0
  std::optional<std::string> threshold_note;
};

using ActivationSpec = std::variant<ReluLikeSpec, SmoothSpec>;

// --- built-in smooth evaluators -------------------------------------------

// 4 sigmoid(x) - 2, evaluated as 2 tanh(x/2) to stay accurate near 0.
// Odd, with phi''(0) = 0 and phi'''(0) = -1/2.
inline SmoothSpec sigmoid_centered(double a = 1.0, double p = 0.5) {
  SmoothSpec spec;
  spec.second_deriv = 0.0;
  spec.third_deriv = -0.5;
  spec.a = a;
  spec.exponent_p = p;
  spec.evaluator = [](double x) { return 2.0 * std::tanh(0.5 * x); };
  spec.name = "sigmoid_centered";
  return spec;
}

inline SmoothSpec tanh_spec(double a = 1.0, double p = 0.5) {
  SmoothSpec spec;
  spec.second_deriv = 0.0;
  spec.third_deriv = -2.0;
  spec.a = a;
  spec.exponent_p = p;
  spec.evaluator = [](double x) { return std::tanh(x); };
  spec.name = "tanh";
  return spec;
}

inline double log1pexp(double y) {
  if (y > 35.0) return y + std::exp(-y);
  if (y < -35.0) return std::exp(y);
  return std::log1p(std::exp(y));
}

// Softplus re-centered at x0:
//   phi(x) = (1 + e^{-x0}) (log(1 + e^{x+x0}) - log(1 + e^{x0}))
// with phi''(0) = 1/(1+e^{x0}) and phi'''(0) = (1 - e^{x0})/(1+e^{x0})^2.
inline SmoothSpec softplus_shifted(double x0, double a = 1.0, double p = 0.5) {
  SmoothSpec spec;
  const double ex = std::exp(x0);
  spec.second_deriv = 1.0 / (1.0 + ex);
  spec.third_deriv = (1.0 - ex) / ((1.0 + ex) * (1.0 + ex));
  spec.a = a;
  spec.exponent_p = p;
  const double base = log1pexp(x0);
  const double gain = 1.0 + std::exp(-x0);
  const double sig = 1.0 / (1.0 + std::exp(-x0));
  // log(1+e^{x+x0}) - log(1+e^{x0}) == log1p(sigmoid(x0) expm1(x)), which is
  // the cancellation-free form for small |x|
  spec.evaluator = [x0, base, gain, sig](double x) {
    if (std::abs(x) < 30.0) return gain * std::log1p(sig * std::expm1(x));
    return gain * (log1pexp(x + x0) - base);
  };
  spec.name = "softplus_shifted";
  return spec;
}

inline SmoothSpec custom_smooth(double second_deriv, double third_deriv,
                                std::function<double(double)> evaluator,
                                double a = 1.0, double p = 0.5) {
  SmoothSpec spec;
  spec.second_deriv = second_deriv;
  spec.third_deriv = third_deriv;
  spec.a = a;
  spec.exponent_p = p;
  spec.evaluator = std::move(evaluator);
  spec.name = "custom";
  return spec;
}

// --- shaped evaluation ------------------------------------------------------

inline double eval_shaped(const ReluLikeSpec& spec, long n, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
  const SlopePair s = spec.slopes_at(n);
  return s.s_plus * std::max(x, 0.0) + s.s_minus * std::min(x, 0.0);
}

inline double eval_shaped(const SmoothSpec& spec, long n, double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("non-finite input");
  if (!spec.evaluator) throw std::invalid_argument("smooth spec has no evaluator");
  const double s = spec.scale_at(n);
  return s * spec.evaluator(x / s);
}

inline double eval_shaped(const ActivationSpec& spec, long n, double x) {
  return std::visit([&](const auto& s) { return eval_shaped(s, n, x); }, spec);
}

// --- normalizing constant c = 1 / E[phi_s(g)^2] ------------------------------

inline double normalizing_constant(const ReluLikeSpec& spec, long n) {
  const SlopePair s = spec.slopes_at(n);
  return moments::k_moments(moments::KKind::C, s, 0.0);
}

// Smooth case by 64-node Gauss-Hermite quadrature of the shaped evaluator.
inline double normalizing_constant(const SmoothSpec& spec, long n) {
  const double s = spec.scale_at(n);
  if (!spec.evaluator) throw std::invalid_argument("smooth spec has no evaluator");
  const double m2 = quadrature::gaussian_expectation(quadrature::default_rule(), [&](double g) {
    const double v = s * spec.evaluator(g / s);
    return v * v;
  });
  if (!(m2 > 1e-300)) throw std::runtime_error("zero second moment: c undefined");
  return 1.0 / m2;
}

inline double normalizing_constant(const ActivationSpec& spec, long n) {
  return std::visit([&](const auto& s) { return normalizing_constant(s, n); }, spec);
}

// Second-order expansion c ~ 1 - b / s^2, exposed for cross-checks only.
inline double normalizing_constant_expansion(const SmoothSpec& spec, long n) {
  const double s = spec.scale_at(n);
  const double b = 0.75 * spec.second_deriv * spec.second_deriv + spec.third_deriv;
  return 1.0 - b / (s * s);
}

// --- stability ---------------------------------------------------------------

inline double stability_b(const SmoothSpec& spec) {
  return 0.75 * spec.second_deriv * spec.second_deriv + spec.third_deriv;
}

// Root of b(x0) for the shifted softplus family, by bisection on [-5, 5].
inline double softplus_stability_threshold(double tol = 1e-10) {
  auto b_of = [](double x0) { return stability_b(softplus_shifted(x0)); };
  double lo = -5.0, hi = 5.0;
  double blo = b_of(lo), bhi = b_of(hi);
  if (!(blo > 0.0 && bhi < 0.0)) throw std::runtime_error("bisection bracket invalid");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (b_of(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline StabilityReport stability_coefficient(const SmoothSpec& spec) {
  StabilityReport report;
  report.b = stability_b(spec);
  report.explodes = report.b > 0.0;
  if (spec.name == "softplus_shifted") {
    const double x0_star = softplus_stability_threshold();
    report.threshold_note =
        "stability boundary for the shifted softplus family: b(x0) = "
        "(7/4 - e^{x0}) / (1 + e^{x0})^2, root x0* = " +
        std::to_string(x0_star) +
        " = log(7/4); note this differs from the sometimes-quoted factor "
        "(5/4 - e^{x0}) / (1 + e^{x0})^2, whose root would be log(5/4) ~ 0.2231";
  }
  return report;
}

}  // namespace covshape::activations

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace covshape::quadrature {

struct GaussHermiteRule {
  std::vector<double> nodes;    // abscissae for weight exp(-x^2)
  std::vector<double> weights;  // sum(weights) = sqrt(pi)
};

// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
// matrix with off-diagonals sqrt(k/2); weights come from the first components
// of the eigenvectors.
inline GaussHermiteRule gauss_hermite_rule(int n) {
  if (n < 1) throw std::invalid_argument("quadrature order must be >= 1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double off = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("Gauss-Hermite eigen decomposition failed");
  const double sqrt_pi = std::sqrt(3.14159265358979323846);
  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = solver.eigenvalues()(i);
    const double v0 = solver.eigenvectors()(0, i);
    rule.weights[i] = sqrt_pi * v0 * v0;
  }
  return rule;
}

// E[f(g)] for g ~ N(0,1) via the substitution g = sqrt(2) x.
template <typename Fn>
double gaussian_expectation(const GaussHermiteRule& rule, Fn&& f) {
  const double inv_sqrt_pi = 1.0 / std::sqrt(3.14159265358979323846);
  double acc = 0.0;
  const double sqrt2 = std::sqrt(2.0);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(sqrt2 * rule.nodes[i]);
  return acc * inv_sqrt_pi;
}

inline const GaussHermiteRule& default_rule() {
  static const GaussHermiteRule rule = gauss_hermite_rule(64);
  return rule;
}

}  // namespace covshape::quadrature

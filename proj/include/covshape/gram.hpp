#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace covshape::gram {

// Flat index of the ordered pair (a, b), a <= b, in the row-major traversal
// of the upper triangle (diagonal included).
inline int upper_index(int m, int a, int b) {
  if (a > b || a < 0 || b >= m) throw std::out_of_range("bad pair index");
  return a * m - a * (a - 1) / 2 + (b - a);
}

inline int upper_size(int m) { return m * (m + 1) / 2; }

// Same for the strict upper triangle (a < b).
inline int strict_upper_index(int m, int a, int b) {
  if (a >= b || a < 0 || b >= m) throw std::out_of_range("bad pair index");
  return a * (m - 1) - a * (a - 1) / 2 + (b - a - 1);
}

inline int strict_upper_size(int m) { return m * (m - 1) / 2; }

// Symmetric m x m covariance matrix stored as its upper-triangular vector.
struct GramState {
  int m = 0;
  Eigen::VectorXd upper;

  GramState() = default;
  explicit GramState(int m_) : m(m_), upper(Eigen::VectorXd::Zero(upper_size(m_))) {}

  double& operator()(int a, int b) { return upper(upper_index(m, std::min(a, b), std::max(a, b))); }
  double operator()(int a, int b) const {
    return upper(upper_index(m, std::min(a, b), std::max(a, b)));
  }

  Eigen::MatrixXd to_matrix() const {
    Eigen::MatrixXd v(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) v(a, b) = v(b, a) = (*this)(a, b);
    return v;
  }

  static GramState from_matrix(const Eigen::MatrixXd& v) {
    GramState g(static_cast<int>(v.rows()));
    for (int a = 0; a < g.m; ++a)
      for (int b = a; b < g.m; ++b) g(a, b) = 0.5 * (v(a, b) + v(b, a));
    return g;
  }

  double correlation(int a, int b) const {
    const double den = std::sqrt((*this)(a, a) * (*this)(b, b));
    if (!(den > 0.0)) throw std::domain_error("correlation undefined: zero diagonal");
    return (*this)(a, b) / den;
  }
};

// Smallest eigenvalue; used for PSD checks against the -1e-9 * trace slack.
inline double min_eigenvalue(const Eigen::MatrixXd& v) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(v, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

// Projects a symmetric matrix onto the PSD cone by clipping negative
// eigenvalues at zero.
inline Eigen::MatrixXd psd_clip(const Eigen::MatrixXd& v) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(v);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigen decomposition failed");
  Eigen::VectorXd lam = solver.eigenvalues().cwiseMax(0.0);
  return solver.eigenvectors() * lam.asDiagonal() * solver.eigenvectors().transpose();
}

// Lower-triangular-shaped PSD factor L with L L^T = clip(v): eigenvalues below
// zero are clipped after adding `jitter` to the diagonal.
inline Eigen::MatrixXd psd_factor(Eigen::MatrixXd v, double jitter = 0.0) {
  if (jitter != 0.0) v.diagonal().array() += jitter;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(v);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigen decomposition failed");
  Eigen::VectorXd lam = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * lam.asDiagonal();
}

}  // namespace covshape::gram

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace covshape::moments {

inline constexpr double kPi = 3.14159265358979323846;

// Clamp a correlation to [-1, 1], tolerating up to 1e-12 of accumulated
// floating error outside the interval.
inline double clamp_correlation(double rho) {
  if (rho > 1.0) {
    if (rho > 1.0 + 1e-12) throw std::invalid_argument("correlation outside [-1, 1]");
    return 1.0;
  }
  if (rho < -1.0) {
    if (rho < -1.0 - 1e-12) throw std::invalid_argument("correlation outside [-1, 1]");
    return -1.0;
  }
  return rho;
}

enum class JKind { J0, J1, J2, J31 };

// Gaussian rectified moments J(rho) = E phi(g)^p phi(rho g + q w)^r for
// phi = ReLU, g, w independent standard normals, q = sqrt(1 - rho^2).
inline double j_bar(JKind kind, double rho) {
  rho = clamp_correlation(rho);
  const double q = std::sqrt(std::max(0.0, (1.0 - rho) * (1.0 + rho)));
  const double ac = std::acos(-rho);
  switch (kind) {
    case JKind::J0:
      return ac / (2.0 * kPi);
    case JKind::J1:
      return (q + rho * ac) / (2.0 * kPi);
    case JKind::J2:
      return (3.0 * rho * q + ac * (1.0 + 2.0 * rho * rho)) / (2.0 * kPi);
    case JKind::J31:
      return (q * (2.0 + rho * rho) + 3.0 * ac * rho) / (2.0 * kPi);
  }
  throw std::logic_error("unreachable");
}

struct SlopePair {
  double s_plus = 1.0;
  double s_minus = 0.0;

  double sum_sq() const { return s_plus * s_plus + s_minus * s_minus; }
};

enum class KKind { K1, K2, K31, M2, C };

// Joint moments of the two-slope activation phi(x) = s+ max(x,0) + s- min(x,0)
// under a correlated standard Gaussian pair, plus the marginal fourth moment
// M2 = E phi(g)^4 and the normalizing constant c = 1 / E phi(g)^2.
inline double k_moments(KKind kind, const SlopePair& s, double rho) {
  const double sp = s.s_plus, sm = s.s_minus;
  const double p2 = sp * sp, m2 = sm * sm;
  const double p4 = p2 * p2, m4 = m2 * m2;
  switch (kind) {
    case KKind::K1:
      return (p2 + m2) * j_bar(JKind::J1, rho) - 2.0 * sp * sm * j_bar(JKind::J1, -rho);
    case KKind::K2:
      return (p4 + m4) * j_bar(JKind::J2, rho) + 2.0 * p2 * m2 * j_bar(JKind::J2, -rho);
    case KKind::K31:
      return (p4 + m4) * j_bar(JKind::J31, rho) -
             sp * sm * (p2 + m2) * j_bar(JKind::J31, -rho);
    case KKind::M2:
      return 1.5 * (p4 + m4);
    case KKind::C:
      if (p2 + m2 == 0.0) throw std::invalid_argument("zero slopes: c undefined");
      return 2.0 / (p2 + m2);
  }
  throw std::logic_error("unreachable");
}

// One-step coefficient functions of the depthwise correlation Markov chain
//   rho' = cK1(rho) + mu(rho)/n + sigma(rho) z / sqrt(n),   z ~ N(0,1).
//
// mu and sigma^2 are the conditional mean and variance of the second- and
// first-order terms of the update expansion.  They are assembled here from
// the covariance structure of the normalized fluctuation sums
//   R^aa = (1/sqrt n) sum_i (c phi(g_i)^2 - 1),
//   R^ab = (1/sqrt n) sum_i (c phi(g_i) phi(g'_i) - cK1),
// whose single-pair moments are
//   Var(R^aa)       = c^2 M2 - 1,
//   Cov(R^aa, R^bb) = c^2 K2 - 1,
//   Cov(R^ab, R^aa) = c^2 K31 - c K1,
//   Var(R^ab)       = c^2 (K2 - K1^2).
class ReluChainCoeffs {
 public:
  explicit ReluChainCoeffs(SlopePair slopes) : slopes_(slopes) {
    if (slopes.sum_sq() == 0.0) throw std::invalid_argument("zero slopes");
  }

  const SlopePair& slopes() const { return slopes_; }

  // cK1(rho); fixed point at rho = 1.
  double mean_map(double rho) const {
    const double c = k_moments(KKind::C, slopes_, rho);
    return c * k_moments(KKind::K1, slopes_, rho);
  }

  double drift_correction(double rho) const {
    Parts p(slopes_, rho);
    // E[(cK1/8)(3 (Raa+Rbb)^2 - 4 Raa Rbb) - (1/2) Rab (Raa+Rbb)]
    return (p.cK1 / 8.0) * (3.0 * (2.0 * p.var_diag + 2.0 * p.cov_diag) - 4.0 * p.cov_diag) -
           p.cov_offdiag;
  }

  double noise_scale(double rho) const {
    Parts p(slopes_, rho);
    // E[(Rab - (cK1/2)(Raa+Rbb))^2]
    double s2 = p.var_off + (p.cK1 * p.cK1 / 4.0) * (2.0 * p.var_diag + 2.0 * p.cov_diag) -
                2.0 * p.cK1 * p.cov_offdiag;
    if (s2 < -1e-10) throw std::runtime_error("negative chain variance: formula transcription error");
    return std::sqrt(std::max(s2, 0.0));
  }

  // One chain update with an externally supplied standard normal draw.
  double step(double rho, double z, double n) const {
    rho = clamp_correlation(rho);
    return mean_map(rho) + drift_correction(rho) / n + noise_scale(rho) * z / std::sqrt(n);
  }

 private:
  struct Parts {
    double cK1, var_diag, cov_diag, cov_offdiag, var_off;
    Parts(const SlopePair& s, double rho) {
      const double c = k_moments(KKind::C, s, rho);
      const double K1 = k_moments(KKind::K1, s, rho);
      const double K2 = k_moments(KKind::K2, s, rho);
      const double K31 = k_moments(KKind::K31, s, rho);
      const double M2 = k_moments(KKind::M2, s, rho);
      cK1 = c * K1;
      var_diag = c * c * M2 - 1.0;
      cov_diag = c * c * K2 - 1.0;
      cov_offdiag = c * c * K31 - c * K1;
      var_off = c * c * (K2 - K1 * K1);
    }
  };

  SlopePair slopes_;
};

// Shaping drift nu(rho) = ((c+ - c-)^2 / 2pi) (sqrt(1-rho^2) - rho arccos rho),
// the n^{-1} coefficient in cK1(rho) = rho + nu(rho)/n + O(n^{-3/2}) at slopes
// 1 + c/sqrt(n).  nu(1) = 0 and nu >= 0 on [-1, 1].
inline double shaping_drift_nu(double c_plus, double c_minus, double rho) {
  rho = clamp_correlation(rho);
  const double diff = c_plus - c_minus;
  const double q = std::sqrt(std::max(0.0, (1.0 - rho) * (1.0 + rho)));
  return diff * diff / (2.0 * kPi) * (q - rho * std::acos(rho));
}

// Deterministic width-free layer map rho_{l+1} = cK1(rho_l).  Returns the
// iterates rho_0 .. rho_steps.
inline std::vector<double> infinite_width_recursion(const SlopePair& slopes, double rho0,
                                                    int steps) {
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  rho0 = clamp_correlation(rho0);
  ReluChainCoeffs coeffs(slopes);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(rho0);
  double rho = rho0;
  for (int l = 0; l < steps; ++l) {
    rho = clamp_correlation(coeffs.mean_map(rho));
    out.push_back(rho);
  }
  return out;
}

// Gap iterates r_l = 1 - rho_l of the plain ReLU recursion, evaluated in a
// cancellation-free form so the deep-l tail stays accurate:
//   r' = (pi r + (1-r) theta - q) / pi,  theta = 2 asin(sqrt(r/2)),
//   q = sqrt(r (2-r)).
inline std::vector<double> relu_recursion_gap(double r0, int steps) {
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (r0 < 0.0 || r0 > 1.0) throw std::invalid_argument("r0 must be in [0, 1]");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(r0);
  double r = r0;
  for (int l = 0; l < steps; ++l) {
    const double theta = 2.0 * std::asin(std::sqrt(r / 2.0));
    const double q = std::sqrt(r * (2.0 - r));
    r = (kPi * r + (1.0 - r) * theta - q) / kPi;
    if (r < 0.0) r = 0.0;
    out.push_back(r);
  }
  return out;
}

enum class BoundVariant { proved, conjectured };

// Closed-form envelope for the gap r_l = 1 - rho_l of the ReLU recursion:
//   r_l <= r_0 / (1 + kappa l sqrt(r_0))^2
// with kappa = 2 sqrt(2) / (9 pi) for the proved variant and
// kappa = sqrt(2) / (3 pi) for the conjectured sharper approximation.
inline double logistic_bound(double r0, double ell, BoundVariant variant) {
  if (r0 < 0.0 || r0 > 1.0) throw std::invalid_argument("r0 must be in [0, 1]");
  if (ell < 0.0) throw std::invalid_argument("ell must be >= 0");
  const double kappa = variant == BoundVariant::proved ? 2.0 * std::sqrt(2.0) / (9.0 * kPi)
                                                       : std::sqrt(2.0) / (3.0 * kPi);
  const double denom = 1.0 + kappa * ell * std::sqrt(r0);
  return r0 / (denom * denom);
}

}  // namespace covshape::moments

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "covshape/activations.hpp"
#include "covshape/gram.hpp"
#include "covshape/moments.hpp"
#include "covshape/parallel.hpp"
#include "covshape/rng.hpp"

namespace covshape::sde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Drift/diffusion pair over a flattened state vector.  diffusion_factor
// returns any square root L of the diffusion covariance (L L^T = Sigma);
// domain_projection re-imposes the state constraints after an Euler step.
struct SdeSystem {
  int dimension = 1;
  std::function<VectorXd(const VectorXd&)> drift;
  std::function<MatrixXd(const VectorXd&)> diffusion_factor;
  std::function<VectorXd(VectorXd)> domain_projection;
  std::function<bool(const VectorXd&)> explosion_test;
  std::function<bool(const VectorXd&)> absorption_test;  // optional
  std::string name;
};

struct OdeSystem {
  int dimension = 1;
  std::function<VectorXd(const VectorXd&)> drift;
  std::function<VectorXd(VectorXd)> domain_projection;
  std::string name;
};

enum class PathStatus { alive, exploded, absorbed };

inline const char* to_string(PathStatus s) {
  switch (s) {
    case PathStatus::alive: return "alive";
    case PathStatus::exploded: return "exploded";
    case PathStatus::absorbed: return "absorbed";
  }
  return "?";
}

// S independent sample paths on a common recorded time grid.  Exploded and
// absorbed paths carry their first-passage time and hold the stopped state
// for the rest of the grid.
struct PathEnsemble {
  std::vector<double> time_grid;
  int dimension = 1;
  std::size_t n_paths = 0;
  std::vector<double> data;  // [path][time][component], row-major
  std::vector<PathStatus> status;
  std::vector<double> event_time;

  double state(std::size_t p, std::size_t t, int k) const {
    return data[(p * time_grid.size() + t) * dimension + k];
  }
  double& state(std::size_t p, std::size_t t, int k) {
    return data[(p * time_grid.size() + t) * dimension + k];
  }

  // Final-time values of one component across paths.  Exploded paths are
  // skipped; absorbed paths are genuine values and stay in.
  std::vector<double> finals(int k, bool include_exploded = false) const {
    std::vector<double> out;
    out.reserve(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) {
      if (!include_exploded && status[p] == PathStatus::exploded) continue;
      out.push_back(state(p, time_grid.size() - 1, k));
    }
    return out;
  }

  std::size_t exploded_count() const {
    std::size_t c = 0;
    for (auto s : status) c += s == PathStatus::exploded;
    return c;
  }
};

// --- coefficient assembly ---------------------------------------------------

namespace detail {

inline double correlation_from(const gram::GramState& v, int a, int b) {
  const double den = std::sqrt(std::max(v(a, a), 0.0) * std::max(v(b, b), 0.0));
  if (den <= 0.0) return 1.0;  // multiplied by a vanishing factor at call sites
  return moments::clamp_correlation(std::max(-1.0, std::min(1.0, v(a, b) / den)));
}

// Sigma_{(ab),(cd)} = V^ac V^bd + V^ad V^bc over upper-triangle pair indices.
inline MatrixXd covariance_diffusion(const gram::GramState& v) {
  const int m = v.m;
  const int dim = gram::upper_size(m);
  MatrixXd sigma(dim, dim);
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) {
      const int row = gram::upper_index(m, a, b);
      for (int c = 0; c < m; ++c)
        for (int d = c; d < m; ++d) {
          const int col = gram::upper_index(m, c, d);
          sigma(row, col) = v(a, c) * v(b, d) + v(a, d) * v(b, c);
        }
    }
  return sigma;
}

inline gram::GramState unpack(const VectorXd& x, int m) {
  gram::GramState v(m);
  v.upper = x;
  return v;
}

inline VectorXd psd_projected_upper(const VectorXd& x, int m) {
  gram::GramState v = unpack(x, m);
  MatrixXd mat = v.to_matrix();
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(mat);
  if (solver.info() != Eigen::Success) throw std::runtime_error("projection eigen failure");
  const double tol = -1e-12 * std::max(1.0, mat.trace());
  if (solver.eigenvalues().minCoeff() >= tol) return x;
  MatrixXd clipped = solver.eigenvectors() *
                     solver.eigenvalues().cwiseMax(0.0).asDiagonal() *
                     solver.eigenvectors().transpose();
  return gram::GramState::from_matrix(clipped).upper;
}

}  // namespace detail

// --- builders ----------------------------------------------------------------

// dV = b(V) dt + Sigma(V)^{1/2} dB on the upper triangle of an m x m Gram,
// with b^{ab} = nu(rho^ab) sqrt(V^aa V^bb) and Sigma as above.  Diagonal
// entries are driftless (nu(1) = 0).
inline SdeSystem build_relu_covariance_sde(double c_plus, double c_minus, int m) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  SdeSystem sys;
  sys.dimension = gram::upper_size(m);
  sys.name = "relu_covariance";
  sys.drift = [c_plus, c_minus, m](const VectorXd& x) {
    gram::GramState v = detail::unpack(x, m);
    VectorXd b(x.size());
    for (int a = 0; a < m; ++a)
      for (int bb = a; bb < m; ++bb) {
        const double prod = std::max(v(a, a), 0.0) * std::max(v(bb, bb), 0.0);
        const double rho = detail::correlation_from(v, a, bb);
        b(gram::upper_index(m, a, bb)) =
            moments::shaping_drift_nu(c_plus, c_minus, rho) * std::sqrt(prod);
      }
    return b;
  };
  sys.diffusion_factor = [m](const VectorXd& x) {
    return gram::psd_factor(detail::covariance_diffusion(detail::unpack(x, m)));
  };
  sys.domain_projection = [m](VectorXd x) { return detail::psd_projected_upper(x, m); };
  sys.explosion_test = [](const VectorXd&) { return false; };
  return sys;
}

// Scalar correlation SDE d rho = [nu(rho) + mu(rho)] dt + sigma(rho) dB on
// [-1, 1], with mu(rho) = -rho(1-rho^2)/2 and sigma(rho) = 1 - rho^2.
inline SdeSystem build_relu_correlation_sde(double c_plus, double c_minus) {
  SdeSystem sys;
  sys.dimension = 1;
  sys.name = "relu_correlation";
  sys.drift = [c_plus, c_minus](const VectorXd& x) {
    const double rho = x(0);
    VectorXd b(1);
    b(0) = moments::shaping_drift_nu(c_plus, c_minus, rho) - 0.5 * rho * (1.0 - rho * rho);
    return b;
  };
  sys.diffusion_factor = [](const VectorXd& x) {
    MatrixXd l(1, 1);
    l(0, 0) = 1.0 - x(0) * x(0);
    return l;
  };
  sys.domain_projection = [](VectorXd x) {
    x(0) = std::max(-1.0, std::min(1.0, x(0)));
    return x;
  };
  sys.explosion_test = [](const VectorXd&) { return false; };
  sys.absorption_test = [](const VectorXd& x) { return x(0) >= 1.0; };
  return sys;
}

// Linear-network limit: the same scalar SDE without the shaping drift nu.
inline SdeSystem build_linear_correlation_sde() {
  SdeSystem sys = build_relu_correlation_sde(0.0, 0.0);
  sys.name = "linear_correlation";
  return sys;
}

// Joint correlation SDE over the strict upper triangle of the m x m
// correlation matrix: drift nu + mu entrywise, diffusion covariance
//   Sigma_{(ab),(cd)} = r^ac r^bd + r^ad r^bc
//                      + (1/2) r^ab r^cd ((r^ac)^2 + (r^bc)^2 + (r^ad)^2 + (r^bd)^2)
//                      - r^ab (r^ac r^ad + r^bc r^bd)
//                      - r^cd (r^ac r^bc + r^ad r^bd),
// with r^aa = 1.
inline SdeSystem build_joint_correlation_sde(double c_plus, double c_minus, int m) {
  if (m < 2) throw std::invalid_argument("m must be >= 2");
  SdeSystem sys;
  sys.dimension = gram::strict_upper_size(m);
  sys.name = "joint_correlation";

  auto entry = [m](const VectorXd& x, int a, int b) -> double {
    if (a == b) return 1.0;
    return x(gram::strict_upper_index(m, std::min(a, b), std::max(a, b)));
  };

  sys.drift = [c_plus, c_minus, m, entry](const VectorXd& x) {
    VectorXd b(x.size());
    for (int a = 0; a < m; ++a)
      for (int bb = a + 1; bb < m; ++bb) {
        const double rho = moments::clamp_correlation(entry(x, a, bb));
        b(gram::strict_upper_index(m, a, bb)) =
            moments::shaping_drift_nu(c_plus, c_minus, rho) - 0.5 * rho * (1.0 - rho * rho);
      }
    return b;
  };
  sys.diffusion_factor = [m, entry](const VectorXd& x) {
    const int dim = gram::strict_upper_size(m);
    MatrixXd sigma(dim, dim);
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b) {
        const int row = gram::strict_upper_index(m, a, b);
        const double rab = entry(x, a, b);
        for (int c = 0; c < m; ++c)
          for (int d = c + 1; d < m; ++d) {
            const int col = gram::strict_upper_index(m, c, d);
            const double rcd = entry(x, c, d);
            const double rac = entry(x, a, c), rbd = entry(x, b, d);
            const double rad = entry(x, a, d), rbc = entry(x, b, c);
            sigma(row, col) =
                rac * rbd + rad * rbc +
                0.5 * rab * rcd * (rac * rac + rbc * rbc + rad * rad + rbd * rbd) -
                rab * (rac * rad + rbc * rbd) - rcd * (rac * rbc + rad * rbd);
          }
      }
    return gram::psd_factor(sigma);
  };
  sys.domain_projection = [m](VectorXd x) {
    for (int i = 0; i < x.size(); ++i) x(i) = std::max(-1.0, std::min(1.0, x(i)));
    // re-impose PSD of the unit-diagonal correlation matrix
    MatrixXd corr = MatrixXd::Identity(m, m);
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b)
        corr(a, b) = corr(b, a) = x(gram::strict_upper_index(m, a, b));
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(corr);
    if (solver.info() != Eigen::Success) throw std::runtime_error("correlation PSD repair failed");
    if (solver.eigenvalues().minCoeff() >= -1e-12 * m) return x;
    MatrixXd clipped = solver.eigenvectors() *
                       solver.eigenvalues().cwiseMax(0.0).asDiagonal() *
                       solver.eigenvectors().transpose();
    for (int a = 0; a < m; ++a)
      if (clipped(a, a) < 1e-12) throw std::runtime_error("correlation PSD repair failed");
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b) {
        const double r = clipped(a, b) / std::sqrt(clipped(a, a) * clipped(b, b));
        x(gram::strict_upper_index(m, a, b)) = std::max(-1.0, std::min(1.0, r));
      }
    return x;
  };
  sys.explosion_test = [](const VectorXd&) { return false; };
  return sys;
}

// Smooth-shaping covariance SDE (drift from the local derivative data, same
// diffusion as the ReLU covariance system).  The explosion test mirrors the
// stopped-process radius: any |V^ab| >= M or any V^aa <= 1/M.
inline SdeSystem build_smooth_covariance_sde(const activations::SmoothSpec& spec, int m,
                                             double explosion_radius = 1e6) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  SdeSystem sys;
  sys.dimension = gram::upper_size(m);
  sys.name = "smooth_covariance";
  const double q2 = spec.second_deriv * spec.second_deriv / (4.0 * spec.a * spec.a);
  const double q3 = spec.third_deriv / (2.0 * spec.a * spec.a);
  sys.drift = [q2, q3, m](const VectorXd& x) {
    gram::GramState v = detail::unpack(x, m);
    VectorXd b(x.size());
    for (int a = 0; a < m; ++a)
      for (int bb = a; bb < m; ++bb) {
        const double vaa = v(a, a), vbb = v(bb, bb), vab = v(a, bb);
        b(gram::upper_index(m, a, bb)) = q2 * (vaa * vbb + vab * (2.0 * vab - 3.0)) +
                                         q3 * vab * (vaa + vbb - 2.0);
      }
    return b;
  };
  sys.diffusion_factor = [m](const VectorXd& x) {
    return gram::psd_factor(detail::covariance_diffusion(detail::unpack(x, m)));
  };
  sys.domain_projection = [m](VectorXd x) { return detail::psd_projected_upper(x, m); };
  const double radius = explosion_radius;
  sys.explosion_test = [m, radius](const VectorXd& x) {
    for (int i = 0; i < x.size(); ++i)
      if (!std::isfinite(x(i)) || std::abs(x(i)) >= radius) return true;
    for (int a = 0; a < m; ++a)
      if (x(gram::upper_index(m, a, a)) <= 1.0 / radius) return true;
    return false;
  };
  return sys;
}

// Geometric Brownian motion dX = sigma X dB.
inline SdeSystem build_gbm(double sigma2) {
  if (sigma2 < 0.0) throw std::invalid_argument("sigma2 must be >= 0");
  SdeSystem sys;
  sys.dimension = 1;
  sys.name = "gbm";
  const double sigma = std::sqrt(sigma2);
  sys.drift = [](const VectorXd& x) { return VectorXd::Zero(x.size()); };
  sys.diffusion_factor = [sigma](const VectorXd& x) {
    MatrixXd l(1, 1);
    l(0, 0) = sigma * x(0);
    return l;
  };
  sys.domain_projection = [](VectorXd x) {
    x(0) = std::max(0.0, x(0));
    return x;
  };
  sys.explosion_test = [](const VectorXd&) { return false; };
  return sys;
}

// Exact GBM law at time t: X_t = x0 exp(N(-sigma^2 t / 2, sigma^2 t)).
inline double gbm_exact_sample(double sigma2, double t, double x0, rng::NormalSampler& normal) {
  return x0 * std::exp(-0.5 * sigma2 * t + std::sqrt(sigma2 * t) * normal());
}

// Angle form theta = arccos(rho):
//   d theta = ((c+ - c-)^2 / 2pi)(theta cot theta - 1) dt + sin theta dB.
inline double theta_cot_theta_minus_one(double theta) {
  if (theta < 1e-4) return -theta * theta / 3.0 - theta * theta * theta * theta / 45.0;
  return theta * std::cos(theta) / std::sin(theta) - 1.0;
}

inline SdeSystem build_angle_sde(double c_plus, double c_minus) {
  SdeSystem sys;
  sys.dimension = 1;
  sys.name = "angle";
  const double gain = (c_plus - c_minus) * (c_plus - c_minus) / (2.0 * moments::kPi);
  sys.drift = [gain](const VectorXd& x) {
    VectorXd b(1);
    b(0) = gain * theta_cot_theta_minus_one(x(0));
    return b;
  };
  sys.diffusion_factor = [](const VectorXd& x) {
    MatrixXd l(1, 1);
    l(0, 0) = std::sin(x(0));
    return l;
  };
  sys.domain_projection = [](VectorXd x) {
    x(0) = std::max(0.0, std::min(moments::kPi, x(0)));
    return x;
  };
  sys.explosion_test = [](const VectorXd&) { return false; };
  sys.absorption_test = [](const VectorXd& x) { return x(0) <= 0.0; };
  return sys;
}

inline std::vector<double> angle_transform(const std::vector<double>& rho_path) {
  std::vector<double> theta(rho_path.size());
  for (std::size_t i = 0; i < rho_path.size(); ++i)
    theta[i] = std::acos(moments::clamp_correlation(rho_path[i]));
  return theta;
}

// --- critical-exponent regimes ------------------------------------------------

enum class RegimeKind {
  degenerate_ode,      // ReLU-like, p < 1/2: rho_t = 1 for all t > 0
  critical_sde,        // p = 1/2
  linear_sde,          // p > 1/2: drift-free / mu-only limit
  constant_limit,      // smooth, p < 1/2, b <= 0: V constant in t
  zero_or_infinity,    // smooth, p < 1/2, b > 0: diagonal collapses or blows up
};

struct RegimeResult {
  RegimeKind kind;
  std::optional<SdeSystem> sde;
  std::optional<OdeSystem> ode;
  bool instantaneous = false;  // degenerate ODE reaches its limit at t = 0+
  std::string note;
};

inline OdeSystem build_nu_ode(double c_plus, double c_minus) {
  OdeSystem ode;
  ode.dimension = 1;
  ode.name = "nu_ode";
  ode.drift = [c_plus, c_minus](const VectorXd& x) {
    VectorXd b(1);
    b(0) = moments::shaping_drift_nu(c_plus, c_minus, x(0));
    return b;
  };
  ode.domain_projection = [](VectorXd x) {
    x(0) = std::max(-1.0, std::min(1.0, x(0)));
    return x;
  };
  return ode;
}

inline RegimeResult build_regime(const activations::ReluLikeSpec& spec, int /*m*/) {
  if (spec.exponent_p < 0.0) throw std::invalid_argument("exponent_p must be >= 0");
  RegimeResult out{RegimeKind::critical_sde, {}, {}, false, {}};
  if (spec.exponent_p == 0.5) {
    out.kind = RegimeKind::critical_sde;
    out.sde = build_relu_correlation_sde(spec.c_plus, spec.c_minus);
  } else if (spec.exponent_p > 0.5 || spec.c_plus == spec.c_minus) {
    out.kind = RegimeKind::linear_sde;
    out.sde = build_linear_correlation_sde();
    out.note = "shaping drift vanishes on the depth/width time scale";
  } else {
    out.kind = RegimeKind::degenerate_ode;
    out.ode = build_nu_ode(spec.c_plus, spec.c_minus);
    out.instantaneous = true;
    out.note = "correlation jumps to the fixed point 1 at t = 0+";
  }
  return out;
}

inline RegimeResult build_regime(const activations::SmoothSpec& spec, int m,
                                 double explosion_radius = 1e6) {
  if (!(spec.exponent_p > 0.0)) throw std::invalid_argument("exponent_p must be > 0");
  RegimeResult out{RegimeKind::critical_sde, {}, {}, false, {}};
  if (spec.exponent_p == 0.5) {
    out.kind = RegimeKind::critical_sde;
    out.sde = build_smooth_covariance_sde(spec, m, explosion_radius);
  } else if (spec.exponent_p > 0.5) {
    out.kind = RegimeKind::linear_sde;
    SdeSystem sys = build_smooth_covariance_sde(spec, m, explosion_radius);
    sys.drift = [](const VectorXd& x) { return VectorXd::Zero(x.size()); };
    sys.name = "linear_covariance";
    out.sde = std::move(sys);
  } else {
    const double b = activations::stability_b(spec);
    out.kind = b > 0.0 ? RegimeKind::zero_or_infinity : RegimeKind::constant_limit;
    out.note = b > 0.0 ? "diagonal entries drift to 0 or infinity for t > 0"
                       : "covariance entries are constant in t";
  }
  return out;
}

inline RegimeResult build_regime(const activations::ActivationSpec& spec, int m,
                                 double explosion_radius = 1e6) {
  if (const auto* relu = std::get_if<activations::ReluLikeSpec>(&spec))
    return build_regime(*relu, m);
  return build_regime(std::get<activations::SmoothSpec>(spec), m, explosion_radius);
}

// --- integrators ---------------------------------------------------------------

struct IntegrateOptions {
  unsigned threads = 1;
  std::string_view tag = "sde";
  int record_stride = 1;  // record every k-th step (endpoint always recorded)
};

// Euler-Maruyama over [0, T]: x' = proj(x + b dt + L sqrt(dt) xi).  A path
// stops at its first explosion-test hit and holds the stopped state.
inline PathEnsemble integrate(const SdeSystem& system, const VectorXd& x0, double T, double dt,
                              std::size_t n_paths, std::uint64_t master_seed,
                              const IntegrateOptions& options = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (T < 0.0) throw std::invalid_argument("T must be >= 0");
  if (x0.size() != system.dimension) throw std::invalid_argument("x0 dimension mismatch");
  {
    VectorXd projected = system.domain_projection(x0);
    if ((projected - x0).norm() > 1e-9 * (1.0 + x0.norm()))
      throw std::invalid_argument("x0 outside the system domain");
  }

  const std::size_t n_steps = static_cast<std::size_t>(std::floor(T / dt + 1e-12));
  const double remainder = T - static_cast<double>(n_steps) * dt;
  const bool has_tail = remainder > 1e-12 * std::max(1.0, T);

  std::vector<double> grid;
  std::vector<std::size_t> record_at;  // step index -> recorded
  grid.push_back(0.0);
  record_at.push_back(0);
  const int stride = std::max(1, options.record_stride);
  const std::size_t total_steps = n_steps + (has_tail ? 1 : 0);
  for (std::size_t k = 1; k <= total_steps; ++k) {
    const double t = k <= n_steps ? static_cast<double>(k) * dt : T;
    if (k % static_cast<std::size_t>(stride) == 0 || k == total_steps) {
      grid.push_back(t);
      record_at.push_back(k);
    }
  }

  PathEnsemble ens;
  ens.time_grid = grid;
  ens.dimension = system.dimension;
  ens.n_paths = n_paths;
  ens.data.assign(n_paths * grid.size() * system.dimension, 0.0);
  ens.status.assign(n_paths, PathStatus::alive);
  ens.event_time.assign(n_paths, -1.0);

  parallel::parallel_for(n_paths, options.threads, [&](std::size_t p) {
    rng::NormalSampler normal(rng::derive_seed(master_seed, options.tag, p));
    VectorXd x = system.domain_projection(x0);
    VectorXd xi(system.dimension);
    std::size_t next_record = 0;
    auto record = [&](std::size_t slot) {
      for (int k = 0; k < system.dimension; ++k) ens.state(p, slot, k) = x(k);
    };
    record(0);
    next_record = 1;
    bool stopped = false;
    for (std::size_t k = 1; k <= total_steps; ++k) {
      const double h = k <= n_steps ? dt : remainder;
      const double t = k <= n_steps ? static_cast<double>(k) * dt : T;
      if (!stopped) {
        const VectorXd b = system.drift(x);
        const MatrixXd l = system.diffusion_factor(x);
        for (int i = 0; i < system.dimension; ++i) xi(i) = normal();
        x = system.domain_projection(x + b * h + l * (std::sqrt(h) * xi));
        if (system.explosion_test && system.explosion_test(x)) {
          ens.status[p] = PathStatus::exploded;
          ens.event_time[p] = t;
          stopped = true;
        } else if (system.absorption_test && ens.status[p] == PathStatus::alive &&
                   system.absorption_test(x)) {
          ens.status[p] = PathStatus::absorbed;
          ens.event_time[p] = t;
        }
      }
      if (next_record < record_at.size() && record_at[next_record] == k) {
        record(next_record);
        ++next_record;
      }
    }
  });
  return ens;
}

// Classical fixed-step RK4 for the deterministic systems (single path).
inline std::vector<VectorXd> integrate_ode(const OdeSystem& system, const VectorXd& x0, double T,
                                           double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  const std::size_t n_steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-12));
  std::vector<VectorXd> path;
  path.reserve(n_steps + 1);
  VectorXd x = system.domain_projection(x0);
  path.push_back(x);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double h = std::min(dt, T - static_cast<double>(k) * dt);
    const VectorXd k1 = system.drift(x);
    const VectorXd k2 = system.drift(x + 0.5 * h * k1);
    const VectorXd k3 = system.drift(x + 0.5 * h * k2);
    const VectorXd k4 = system.drift(x + h * k3);
    x = system.domain_projection(x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    path.push_back(x);
  }
  return path;
}

}  // namespace covshape::sde

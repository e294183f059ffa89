#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "covshape/activations.hpp"
#include "covshape/gram.hpp"
#include "covshape/parallel.hpp"
#include "covshape/rng.hpp"

namespace covshape::network {

using activations::ActivationSpec;
using gram::GramState;

enum class TraceStatus { alive, degenerate, exploded };

inline const char* to_string(TraceStatus s) {
  switch (s) {
    case TraceStatus::alive: return "alive";
    case TraceStatus::degenerate: return "degenerate";
    case TraceStatus::exploded: return "exploded";
  }
  return "?";
}

// Per-layer Gram states V_0 .. V_d (layer 0 is the input Gram).  A path is
// degenerate from the first layer where some post-activation norm is exactly
// zero; it is exploded from the first layer with a non-finite or oversized
// entry, and the trace stops recording there.
struct LayerTrace {
  int m = 0;
  std::vector<GramState> grams;
  TraceStatus status = TraceStatus::alive;
  int event_layer = -1;
};

inline constexpr double kExplosionGuard = 1e12;

namespace detail {

inline bool check_explosion(const GramState& g) {
  for (int i = 0; i < g.upper.size(); ++i)
    if (!std::isfinite(g.upper(i))) return true;
  for (int a = 0; a < g.m; ++a)
    if (g(a, a) > kExplosionGuard) return true;
  return false;
}

struct ShapedActivation {
  const ActivationSpec& spec;
  long n;
  double operator()(double x) const { return activations::eval_shaped(spec, n, x); }
};

}  // namespace detail

// Exact forward pass: samples every weight matrix with iid standard Gaussian
// entries and records V_l = (c/n) <phi_l^a, phi_l^b> per layer.
inline LayerTrace simulate_full(const ActivationSpec& spec, long n, int d,
                                const Eigen::MatrixXd& inputs, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("need n >= 1 and d >= 1");
  const int n_in = static_cast<int>(inputs.rows());
  const int m = static_cast<int>(inputs.cols());
  if (n_in < 1 || m < 1) throw std::invalid_argument("empty input matrix");
  for (int j = 0; j < m; ++j)
    if (inputs.col(j).norm() == 0.0) throw std::invalid_argument("degenerate input column");

  const double c = activations::normalizing_constant(spec, n);
  detail::ShapedActivation phi{spec, n};
  rng::NormalSampler normal(seed);

  LayerTrace trace;
  trace.m = m;
  trace.grams.reserve(static_cast<std::size_t>(d) + 1);
  trace.grams.push_back(
      GramState::from_matrix(inputs.transpose() * inputs / static_cast<double>(n_in)));

  // z_1 = W_0 x / sqrt(n_in)
  Eigen::MatrixXd z(n, m);
  {
    const double inv = 1.0 / std::sqrt(static_cast<double>(n_in));
    Eigen::VectorXd wrow(n_in);
    for (long i = 0; i < n; ++i) {
      for (int k = 0; k < n_in; ++k) wrow(k) = normal();
      for (int j = 0; j < m; ++j) z(i, j) = inv * wrow.dot(inputs.col(j));
    }
  }

  Eigen::MatrixXd act(n, m), znext(n, m);
  const double scale = std::sqrt(c / static_cast<double>(n));
  Eigen::VectorXd wrow(n);
  for (int layer = 1; layer <= d; ++layer) {
    for (int j = 0; j < m; ++j)
      for (long i = 0; i < n; ++i) act(i, j) = phi(z(i, j));

    GramState v(m);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b) v(a, b) = c / static_cast<double>(n) * act.col(a).dot(act.col(b));
    trace.grams.push_back(v);

    if (detail::check_explosion(v)) {
      trace.status = TraceStatus::exploded;
      trace.event_layer = layer;
      return trace;
    }
    if (trace.status == TraceStatus::alive) {
      for (int a = 0; a < m; ++a)
        if (act.col(a).norm() == 0.0) {
          trace.status = TraceStatus::degenerate;
          trace.event_layer = layer;
          break;
        }
    }
    if (layer == d) break;

    // z_{l+1} = sqrt(c/n) W_l phi_l, drawing W_l row by row
    for (long i = 0; i < n; ++i) {
      for (long k = 0; k < n; ++k) wrow(k) = normal();
      for (int j = 0; j < m; ++j) znext(i, j) = scale * wrow.dot(act.col(j));
    }
    z.swap(znext);
  }
  return trace;
}

// Equivalent-in-distribution mode: per layer draws n iid m-dimensional rows
// with covariance V_l (the conditional law of the next pre-activations) and
// recomputes the Gram.  The m x m factor is built from the correlation matrix
// and rescaled by the diagonal, which makes the draw exactly equivariant
// under rescaling of a single input.
inline LayerTrace simulate_conditional(const ActivationSpec& spec, long n, int d,
                                       const GramState& initial_gram, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("need n >= 1 and d >= 1");
  const int m = initial_gram.m;
  if (m < 1) throw std::invalid_argument("empty initial Gram");
  {
    const double tr = initial_gram.to_matrix().trace();
    if (gram::min_eigenvalue(initial_gram.to_matrix()) < -1e-9 * std::max(tr, 1.0))
      throw std::invalid_argument("initial Gram not PSD");
  }

  const double c = activations::normalizing_constant(spec, n);
  detail::ShapedActivation phi{spec, n};
  rng::NormalSampler normal(seed);

  LayerTrace trace;
  trace.m = m;
  trace.grams.reserve(static_cast<std::size_t>(d) + 1);
  trace.grams.push_back(initial_gram);

  Eigen::VectorXd diag_scale(m), xi(m), row(m);
  Eigen::MatrixXd corr(m, m);
  Eigen::MatrixXd act(n, m);
  GramState v = initial_gram;

  for (int layer = 1; layer <= d; ++layer) {
    for (int a = 0; a < m; ++a) diag_scale(a) = std::sqrt(std::max(v(a, a), 0.0));
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        const double den = diag_scale(a) * diag_scale(b);
        corr(a, b) = a == b ? 1.0 : (den > 0.0 ? v(a, b) / den : 0.0);
      }
    }
    Eigen::MatrixXd factor = gram::psd_factor(corr, 1e-12 * static_cast<double>(m));
    // rows z_i = diag * factor * xi_i, entrywise activation, Gram recompute
    for (long i = 0; i < n; ++i) {
      for (int a = 0; a < m; ++a) xi(a) = normal();
      row.noalias() = factor * xi;
      for (int a = 0; a < m; ++a) act(i, a) = phi(diag_scale(a) * row(a));
    }
    GramState next(m);
    for (int a = 0; a < m; ++a)
      for (int b = a; b < m; ++b)
        next(a, b) = c / static_cast<double>(n) * act.col(a).dot(act.col(b));
    trace.grams.push_back(next);

    if (detail::check_explosion(next)) {
      trace.status = TraceStatus::exploded;
      trace.event_layer = layer;
      return trace;
    }
    if (trace.status == TraceStatus::alive) {
      for (int a = 0; a < m; ++a)
        if (next(a, a) == 0.0) {
          trace.status = TraceStatus::degenerate;
          trace.event_layer = layer;
          break;
        }
    }
    v = next;
  }
  return trace;
}

// Correlation trajectory rho_l = V^ab_l / sqrt(V^aa_l V^bb_l).  Stops at the
// first layer where a denominator vanishes; `degenerate_from` then holds that
// layer index (otherwise -1).
struct CorrelationPath {
  std::vector<double> rho;
  int degenerate_from = -1;
};

inline CorrelationPath correlation_path(const LayerTrace& trace, int alpha, int beta) {
  if (alpha == beta || alpha < 0 || beta < 0 || alpha >= trace.m || beta >= trace.m)
    throw std::invalid_argument("need two distinct input indices in range");
  CorrelationPath path;
  path.rho.reserve(trace.grams.size());
  for (std::size_t l = 0; l < trace.grams.size(); ++l) {
    const GramState& g = trace.grams[l];
    const double den = std::sqrt(g(alpha, alpha) * g(beta, beta));
    if (!(den > 0.0)) {
      path.degenerate_from = static_cast<int>(l);
      break;
    }
    path.rho.push_back(g(alpha, beta) / den);
  }
  return path;
}

// Headerless CSV input loader: n_in rows, m columns.
inline Eigen::MatrixXd load_inputs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input CSV: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged CSV row in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty input CSV: " + path);
  Eigen::MatrixXd x(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      x(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
  return x;
}

// Builds the canonical two-column input matrix with unit norms and a given
// initial correlation, so that V_0 = [[1, rho0], [rho0, 1]].
inline Eigen::MatrixXd two_point_inputs(double rho0) {
  if (rho0 < -1.0 || rho0 > 1.0) throw std::invalid_argument("rho0 outside [-1, 1]");
  Eigen::MatrixXd x(2, 2);
  const double s = std::sqrt(2.0);
  x(0, 0) = s;
  x(1, 0) = 0.0;
  x(0, 1) = s * rho0;
  x(1, 1) = s * std::sqrt(std::max(0.0, 1.0 - rho0 * rho0));
  return x;
}

enum class SimMode { full, conditional };

// Ensemble runner: simulates `n_paths` independent traces with per-path seeds
// derived from (master seed, tag, path index) and hands each trace to the
// collector keyed by its path index.  Collfn must write only to slots for its
// own index.
template <typename Collect>
void run_ensemble(const ActivationSpec& spec, long n, int d, SimMode mode,
                  const Eigen::MatrixXd& inputs, const GramState& initial_gram,
                  std::size_t n_paths, std::uint64_t master_seed, std::string_view tag,
                  unsigned threads, Collect&& collect) {
  parallel::parallel_for(n_paths, threads, [&](std::size_t p) {
    const std::uint64_t seed = rng::derive_seed(master_seed, tag, p);
    LayerTrace trace = mode == SimMode::full
                           ? simulate_full(spec, n, d, inputs, seed)
                           : simulate_conditional(spec, n, d, initial_gram, seed);
    collect(p, trace);
  });
}

}  // namespace covshape::network

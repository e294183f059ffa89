#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "covshape/ensemble_io.hpp"
#include "covshape/sde.hpp"
#include "covshape/stats.hpp"
#include "helpers.hpp"

using namespace covshape;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Catch::Approx;

namespace {

VectorXd gram_upper(std::initializer_list<double> values) {
  VectorXd x(static_cast<int>(values.size()));
  int i = 0;
  for (double v : values) x(i++) = v;
  return x;
}

// Independent assembly of the covariance diffusion for the factor tests.
MatrixXd sigma_oracle(const MatrixXd& v) {
  const int m = static_cast<int>(v.rows());
  const int dim = m * (m + 1) / 2;
  MatrixXd sigma(dim, dim);
  int row = 0;
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b, ++row) {
      int col = 0;
      for (int c = 0; c < m; ++c)
        for (int d = c; d < m; ++d, ++col)
          sigma(row, col) = v(a, c) * v(b, d) + v(a, d) * v(b, c);
    }
  return sigma;
}

MatrixXd random_psd(int m, rng::NormalSampler& normal) {
  MatrixXd a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = normal();
  return a * a.transpose() / m;
}

}  // namespace

TEST_CASE("relu covariance diffusion at the identity state", "[sde]") {
  auto sys = sde::build_relu_covariance_sde(0.0, -1.0, 2);
  const VectorXd x = gram_upper({1.0, 0.0, 1.0});
  const MatrixXd l = sys.diffusion_factor(x);
  const MatrixXd sigma = l * l.transpose();
  MatrixXd expected(3, 3);
  expected << 2, 0, 0, 0, 1, 0, 0, 0, 2;
  REQUIRE((sigma - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("m = 1 covariance system is the sigma^2 = 2 geometric Brownian motion", "[sde]") {
  auto sys = sde::build_relu_covariance_sde(0.0, -1.0, 1);
  VectorXd x(1);
  x << 1.7;
  REQUIRE(sys.drift(x)(0) == Approx(0.0).margin(1e-14));
  const MatrixXd l = sys.diffusion_factor(x);
  REQUIRE(l(0, 0) * l(0, 0) == Approx(2.0 * 1.7 * 1.7).margin(1e-10));
}

TEST_CASE("duplicated-input drift entry vanishes", "[sde]") {
  auto sys = sde::build_relu_covariance_sde(0.0, -1.0, 2);
  const VectorXd x = gram_upper({1.0, 1.0, 1.0});  // rho = 1
  REQUIRE(sys.drift(x)(1) == Approx(0.0).margin(1e-14));
}

TEST_CASE("scalar correlation SDE coefficient values", "[sde]") {
  auto sys = sde::build_relu_correlation_sde(0.0, -1.0);
  VectorXd one(1), zero(1), half(1);
  one << 1.0;
  zero << 0.0;
  half << 0.5;
  REQUIRE(sys.drift(one)(0) == Approx(0.0).margin(1e-14));
  REQUIRE(sys.diffusion_factor(one)(0, 0) == Approx(0.0).margin(1e-14));
  REQUIRE(sys.drift(zero)(0) == Approx(1.0 / (2.0 * moments::kPi)).margin(1e-14));
  REQUIRE(sys.diffusion_factor(zero)(0, 0) == Approx(1.0).margin(1e-14));

  // activation-independent part: mu(0.5) = -0.1875, sigma(0.5) = 0.75
  auto linear = sde::build_linear_correlation_sde();
  REQUIRE(linear.drift(half)(0) == Approx(-0.1875).margin(1e-14));
  REQUIRE(linear.diffusion_factor(half)(0, 0) == Approx(0.75).margin(1e-14));
}

TEST_CASE("joint correlation SDE collapses to the scalar system at m = 2", "[sde]") {
  auto joint = sde::build_joint_correlation_sde(0.0, -1.0, 2);
  auto scalar = sde::build_relu_correlation_sde(0.0, -1.0);
  REQUIRE(joint.dimension == 1);
  for (int i = 0; i <= 40; ++i) {
    VectorXd x(1);
    x << -1.0 + 0.05 * i;
    REQUIRE(joint.drift(x)(0) == Approx(scalar.drift(x)(0)).margin(1e-12));
    const MatrixXd l = joint.diffusion_factor(x);
    const double sigma2 = (1.0 - x(0) * x(0)) * (1.0 - x(0) * x(0));
    REQUIRE(l(0, 0) * l(0, 0) == Approx(sigma2).margin(1e-10));
  }
}

TEST_CASE("joint correlation diffusion at the uncorrelated state is the identity", "[sde]") {
  for (int m : {3, 4}) {
    auto joint = sde::build_joint_correlation_sde(0.0, -1.0, m);
    const VectorXd x = VectorXd::Zero(joint.dimension);
    const MatrixXd l = joint.diffusion_factor(x);
    const MatrixXd sigma = l * l.transpose();
    REQUIRE((sigma - MatrixXd::Identity(joint.dimension, joint.dimension))
                .cwiseAbs()
                .maxCoeff() < 1e-9);
  }
}

TEST_CASE("fully correlated coordinate freezes in the joint system", "[sde]") {
  // rho^01 = 1 with rows 0 and 1 otherwise identical: drift and diffusion of
  // that coordinate must vanish
  auto joint = sde::build_joint_correlation_sde(0.0, -1.0, 3);
  VectorXd x(3);  // order: (0,1), (0,2), (1,2)
  x << 1.0, 0.4, 0.4;
  REQUIRE(joint.drift(x)(0) == Approx(0.0).margin(1e-14));
  const MatrixXd l = joint.diffusion_factor(x);
  const MatrixXd sigma = l * l.transpose();
  for (int j = 0; j < 3; ++j) REQUIRE(std::abs(sigma(0, j)) < 1e-9);
}

TEST_CASE("smooth covariance drift marginal and flat states", "[sde]") {
  const auto spec = activations::softplus_shifted(0.4, 1.3);
  const double b = activations::stability_b(spec);
  auto sys1 = sde::build_smooth_covariance_sde(spec, 1);
  for (double v : {0.2, 0.7, 1.0, 1.9, 3.5}) {
    VectorXd x(1);
    x << v;
    REQUIRE(sys1.drift(x)(0) ==
            Approx(b * v * (v - 1.0) / (spec.a * spec.a)).margin(1e-12));
  }
  // all-ones Gram: drift vanishes identically
  auto sys2 = sde::build_smooth_covariance_sde(spec, 2);
  const VectorXd ones = gram_upper({1.0, 1.0, 1.0});
  REQUIRE(sys2.drift(ones).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("stable smooth systems never trip the explosion test", "[sde]") {
  auto sys = sde::build_smooth_covariance_sde(activations::tanh_spec(), 1);
  VectorXd x0(1);
  x0 << 1.0;
  auto ens = sde::integrate(sys, x0, 1.0, 1e-3, 2048, 606, {2, "tanh_unit", 10});
  REQUIRE(ens.exploded_count() == 0);
}

TEST_CASE("geometric Brownian motion basics", "[sde]") {
  auto still = sde::build_gbm(0.0);
  VectorXd x0(1);
  x0 << 1.0;
  auto ens = sde::integrate(still, x0, 1.0, 0.01, 16, 1, {1, "gbm0", 1});
  for (std::size_t p = 0; p < ens.n_paths; ++p)
    for (std::size_t t = 0; t < ens.time_grid.size(); ++t)
      REQUIRE(ens.state(p, t, 0) == 1.0);

  auto gbm = sde::build_gbm(5.0);
  auto paths = sde::integrate(gbm, x0, 1.0, 1e-3, 8192, 20240601, {2, "gbm5", 10});
  auto finals = paths.finals(0);
  auto [mean, se] = testutil::mean_with_error(finals);
  INFO("mean " << mean << " +- " << se);
  REQUIRE(std::abs(mean - 1.0) <= 3.0 * se);

  std::vector<double> logs;
  for (double v : finals)
    if (v > 0.0) logs.push_back(std::log(v));
  const double ks = stats::ks_one_sample(
      logs, [](double x) { return stats::normal_cdf(x, -2.5, 5.0); });
  INFO("ks " << ks);
  REQUIRE(ks < stats::ks_critical_value(0.01, logs.size()));

  // exact-law sampler hits the same distribution
  rng::NormalSampler normal(rng::derive_seed(20240601, "gbm_exact", 0));
  std::vector<double> exact(8192);
  for (auto& v : exact) v = sde::gbm_exact_sample(5.0, 1.0, 1.0, normal);
  REQUIRE(stats::ks_two_sample(finals, exact) <
          stats::ks_critical_value(0.01, finals.size(), exact.size()));
}

TEST_CASE("integrator grid, constancy and domain checks", "[sde]") {
  auto sys = sde::build_relu_correlation_sde(0.0, 0.0);
  sys.drift = [](const VectorXd& x) { return VectorXd::Zero(x.size()); };
  sys.diffusion_factor = [](const VectorXd&) { return MatrixXd::Zero(1, 1); };
  VectorXd x0(1);
  x0 << 0.25;
  auto ens = sde::integrate(sys, x0, 0.55, 0.1, 4, 9, {1, "const", 1});
  REQUIRE(ens.time_grid.front() == 0.0);
  REQUIRE(ens.time_grid.back() == Approx(0.55).margin(1e-12));
  REQUIRE(ens.time_grid.size() == 7);  // 0, 0.1 ... 0.5, 0.55
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t t = 0; t < ens.time_grid.size(); ++t)
      REQUIRE(ens.state(p, t, 0) == 0.25);

  REQUIRE_THROWS_AS(sde::integrate(sys, x0, 1.0, 0.0, 1, 1), std::invalid_argument);
  VectorXd bad(1);
  bad << 1.5;  // outside [-1, 1]
  REQUIRE_THROWS_AS(sde::integrate(sys, bad, 1.0, 0.1, 1, 1), std::invalid_argument);
}

TEST_CASE("step halving leaves the terminal law unchanged", "[sde]") {
  auto sys = sde::build_relu_correlation_sde(0.0, -1.0);
  VectorXd x0(1);
  x0 << 0.3;
  auto coarse = sde::integrate(sys, x0, 1.0, 1e-2, 2048, 111, {2, "half_a", 10});
  auto fine = sde::integrate(sys, x0, 1.0, 5e-3, 2048, 222, {2, "half_b", 10});
  const double ks = stats::ks_two_sample(coarse.finals(0), fine.finals(0));
  INFO("ks " << ks);
  REQUIRE(ks < stats::ks_critical_value(0.05, 2048, 2048));
}

TEST_CASE("diffusion factors reconstruct their target covariance", "[sde][factor]") {
  rng::NormalSampler normal(rng::derive_seed(4, "factor_states", 0));
  for (int m : {1, 2, 3}) {
    auto cov = sde::build_relu_covariance_sde(0.0, -1.0, m);
    auto smooth = sde::build_smooth_covariance_sde(activations::sigmoid_centered(), m);
    for (int trial = 0; trial < 100; ++trial) {
      const MatrixXd v = random_psd(m, normal);
      const VectorXd x = gram::GramState::from_matrix(v).upper;
      const MatrixXd target = sigma_oracle(v);
      for (const auto* sys : {&cov, &smooth}) {
        const MatrixXd l = sys->diffusion_factor(x);
        REQUIRE((l * l.transpose() - target).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
  // scalar correlation: factor^2 == sigma(rho)^2
  auto corr = sde::build_relu_correlation_sde(0.0, -1.0);
  for (int trial = 0; trial < 100; ++trial) {
    VectorXd x(1);
    x << 2.0 * normal.uniform() - 1.0;
    const double l = corr.diffusion_factor(x)(0, 0);
    const double sigma = 1.0 - x(0) * x(0);
    REQUIRE(l * l == Approx(sigma * sigma).margin(1e-12));
  }
}

TEST_CASE("covariance diagonal stays a martingale under Euler", "[sde]") {
  auto sys = sde::build_relu_covariance_sde(0.0, -1.0, 2);
  const VectorXd x0 = gram_upper({1.0, 0.3, 1.0});
  auto ens = sde::integrate(sys, x0, 1.0, 1e-3, 4096, 31337, {2, "diag_mart", 10});
  for (int k : {0, 2}) {
    auto finals = ens.finals(k);
    auto [mean, se] = testutil::mean_with_error(finals);
    INFO("component " << k << ": " << mean << " +- " << se);
    REQUIRE(std::abs(mean - 1.0) <= 3.0 * se);
  }
}

TEST_CASE("angle transform and the angle-form SDE", "[sde]") {
  REQUIRE(sde::angle_transform({1.0})[0] == Approx(0.0).margin(1e-12));
  REQUIRE(sde::angle_transform({0.0})[0] == Approx(moments::kPi / 2.0).margin(1e-12));

  // drift at theta = pi/2 equals -(c+ - c-)^2 / (2 pi)
  auto angle = sde::build_angle_sde(0.0, -1.0);
  VectorXd x(1);
  x << moments::kPi / 2.0;
  REQUIRE(angle.drift(x)(0) == Approx(-1.0 / (2.0 * moments::kPi)).margin(1e-12));

  // small-angle expansion of theta cot(theta) - 1
  REQUIRE(sde::theta_cot_theta_minus_one(0.1) == Approx(-0.01 / 3.0).margin(1e-4));

  // pushforward of the theta process agrees with the rho process in law
  auto rho_sys = sde::build_relu_correlation_sde(0.0, -1.0);
  VectorXd rho0(1), theta0(1);
  rho0 << 0.3;
  theta0 << std::acos(0.3);
  auto rho_ens = sde::integrate(rho_sys, rho0, 1.0, 1e-3, 4096, 51, {2, "rho_form", 10});
  auto theta_ens = sde::integrate(angle, theta0, 1.0, 1e-3, 4096, 52, {2, "theta_form", 10});
  std::vector<double> pushed;
  for (double th : theta_ens.finals(0)) pushed.push_back(std::cos(th));
  const double ks = stats::ks_two_sample(rho_ens.finals(0), pushed);
  INFO("ks " << ks);
  REQUIRE(ks < stats::ks_critical_value(0.05, 4096, 4096));
}

TEST_CASE("regime selection by critical exponent", "[sde]") {
  using activations::ReluLikeSpec;
  const auto degenerate = sde::build_regime(ReluLikeSpec{0.0, -1.0, 0.25}, 2);
  REQUIRE(degenerate.kind == sde::RegimeKind::degenerate_ode);
  REQUIRE(degenerate.instantaneous);
  REQUIRE(degenerate.ode.has_value());

  const auto critical = sde::build_regime(ReluLikeSpec{0.0, -1.0, 0.5}, 2);
  REQUIRE(critical.kind == sde::RegimeKind::critical_sde);
  REQUIRE(critical.sde.has_value());

  const auto linear = sde::build_regime(ReluLikeSpec{0.0, -1.0, 0.75}, 2);
  REQUIRE(linear.kind == sde::RegimeKind::linear_sde);
  VectorXd x(1);
  x << 0.3;
  REQUIRE(linear.sde->drift(x)(0) == Approx(-0.5 * 0.3 * (1.0 - 0.09)).margin(1e-14));

  // equal shape constants give a linear activation at any exponent
  REQUIRE(sde::build_regime(ReluLikeSpec{0.5, 0.5, 0.25}, 2).kind ==
          sde::RegimeKind::linear_sde);

  auto stable = activations::tanh_spec();
  stable.exponent_p = 0.25;
  REQUIRE(sde::build_regime(stable, 2).kind == sde::RegimeKind::constant_limit);
  auto unstable = activations::softplus_shifted(0.0);
  unstable.exponent_p = 0.25;
  REQUIRE(sde::build_regime(unstable, 2).kind == sde::RegimeKind::zero_or_infinity);
  auto smooth_half = activations::tanh_spec();
  REQUIRE(sde::build_regime(smooth_half, 2).kind == sde::RegimeKind::critical_sde);
  auto smooth_linear = activations::tanh_spec();
  smooth_linear.exponent_p = 0.8;
  const auto lin = sde::build_regime(smooth_linear, 2);
  REQUIRE(lin.kind == sde::RegimeKind::linear_sde);
  REQUIRE(lin.sde->drift(gram_upper({1.0, 0.3, 1.0})).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nu ODE integrates to the fixed point", "[sde]") {
  // convergence is algebraic (the gap decays like s^-2), so the horizon has
  // to be long to get close to 1
  auto ode = sde::build_nu_ode(0.0, -1.0);
  VectorXd x0(1);
  x0 << 0.3;
  auto path = sde::integrate_ode(ode, x0, 200.0, 0.01);
  REQUIRE(path.back()(0) > 0.99);
  for (std::size_t i = 1; i < path.size(); ++i) REQUIRE(path[i](0) >= path[i - 1](0) - 1e-12);
}

TEST_CASE("ensemble round-trips through the binary format", "[sde]") {
  auto sys = sde::build_relu_correlation_sde(0.0, -1.0);
  VectorXd x0(1);
  x0 << 0.3;
  auto ens = sde::integrate(sys, x0, 0.2, 0.01, 16, 5, {1, "io", 1});
  const auto dir = std::filesystem::temp_directory_path() / "covshape_io_test";
  std::filesystem::create_directories(dir);
  const std::string bin = (dir / "ens.bin").string();
  io::write_ensemble_binary(ens, bin);
  auto back = io::read_ensemble_binary(bin);
  REQUIRE(back.n_paths == ens.n_paths);
  REQUIRE(back.dimension == ens.dimension);
  REQUIRE(back.time_grid == ens.time_grid);
  REQUIRE(back.data == ens.data);
  for (std::size_t p = 0; p < ens.n_paths; ++p) REQUIRE(back.status[p] == ens.status[p]);

  io::write_ensemble_csv(ens, (dir / "ens.csv").string());
  std::ifstream csv(dir / "ens.csv");
  std::string header;
  std::getline(csv, header);
  REQUIRE(header == "path_id,t,state_0,status");
}

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "chaoslab/fluctuations.hpp"

using namespace chaoslab;

namespace {
constexpr double kPi = std::numbers::pi;

ModelSpec torus_model(double kappa) {
  return make_model(Dynamics::Overdamped, Geometry::Torus, kappa, 0.0, PotentialSpec::cosine_sum({1.0}, 2 * kPi));
}

GridDensity bump(const GridSpec& grid) {
  const Eigen::VectorXd x = grid.x_nodes();
  Eigen::VectorXd v = (1.0 + 0.6 * x.array().cos() + 0.3 * (2 * x.array()).sin()) / (2 * kPi);
  return {v, grid, false};
}

double var_under(const GridSpec& grid, const Eigen::VectorXd& mu, const Eigen::VectorXd& f) {
  const double m = mu.dot(f) * grid.dx();
  return mu.dot(f.cwiseAbs2()) * grid.dx() - m * m;
}
}  // namespace

TEST_CASE("log-log slope fit") {
  SUBCASE("recovers an exact power law with group intercepts") {
    std::vector<double> x, v, se;
    std::vector<int> g;
    for (int grp = 0; grp < 3; ++grp)
      for (int N : {16, 32, 64, 128}) {
        x.push_back(N);
        v.push_back((grp + 1.0) * std::pow(N, -1.5));
        se.push_back(0.01 * v.back());
        g.push_back(grp);
      }
    const SlopeFit f = fit_loglog_slope(x, v, se, g);
    CHECK(f.slope == doctest::Approx(-1.5).epsilon(1e-10));
    CHECK(f.used == 12);
    CHECK(f.conclusive);
  }
  SUBCASE("drops points below the signal-to-noise floor") {
    const SlopeFit f = fit_loglog_slope({1, 2, 4}, {1.0, 0.5, 0.001}, {0.01, 0.01, 0.01}, {0, 0, 0});
    CHECK(f.used == 2);
    CHECK(f.slope == doctest::Approx(-1.0));
  }
  SUBCASE("95% interval covers the true slope") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd;
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> x, v, se;
      std::vector<int> g;
      for (int t = 0; t < 4; ++t)
        for (int N : {64, 128, 256, 512, 1024}) {
          const double truth = (1.0 + t) / N, s = 0.1 * truth;
          x.push_back(N);
          v.push_back(truth + s * nd(gen));
          se.push_back(s);
          g.push_back(t);
        }
      const SlopeFit f = fit_loglog_slope(x, v, se, g);
      covered += std::abs(f.slope + 1.0) <= f.ci;
    }
    CHECK(covered >= 90);
  }
}

TEST_CASE("Kolmogorov distance") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021).epsilon(1e-6));
  CHECK(ks_distance({0.0}, 1.0) == doctest::Approx(0.5));
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::vector<double> s(20000);
  for (double& y : s) y = nd(gen);
  const double d = ks_distance(s, 2.0);
  CHECK(d < 0.015);
  CHECK(ks_distance(s, 1.0) > 0.1);
  const auto [lo, hi] = ks_bootstrap(std::vector<double>(s.begin(), s.begin() + 2000), 2.0, 100, 5);
  CHECK(lo <= hi);
  CHECK(ks_bootstrap(std::vector<double>(s.begin(), s.begin() + 2000), 2.0, 100, 5).first == lo);
}

TEST_CASE("CLT variance") {
  const GridSpec grid = GridSpec::torus(2 * kPi, 64, 2e-3);
  const Eigen::VectorXd x = grid.x_nodes();
  const Eigen::VectorXd phi = x.array().cos() + 0.5 * (2 * x.array()).sin();

  SUBCASE("at t = 0 it is the variance under the initial law") {
    const MeanFieldPath path = solve_path(bump(grid), torus_model(0.5), 1.0);
    const CltVariance v = clt_variance(phi, path, 0.0);
    CHECK(v.sigma_D2 == 0.0);
    CHECK(v.sigma2 == doctest::Approx(var_under(grid, path.state(0), phi)).epsilon(1e-12));
  }
  SUBCASE("without interaction it is the variance under the solution") {
    const MeanFieldPath path = solve_path(bump(grid), torus_model(0.0), 1.5);
    for (double t : {0.5, 1.5}) {
      const CltVariance v = clt_variance(phi, path, t);
      CHECK(std::abs(v.sigma2 - var_under(grid, path.state(path.index(t)), phi)) < 1e-4);
    }
  }
  SUBCASE("matches particle variance with interaction") {
    const ModelSpec spec = torus_model(0.5);
    ReplicaPlan plan;
    plan.N = 128;
    plan.R = 3000;
    plan.dt = 0.01;
    plan.T = 1.0;
    plan.record_times = {1.0};
    plan.master_seed = 21;
    plan.initial_law = InitialLaw::wrapped_gaussian(0.0, 1.0);
    const CltReport rep = clt_experiment(cos_observable(1, 2 * kPi), plan, spec, grid, 1.0);
    CHECK(std::abs(rep.n_var.value - rep.predicted.sigma2) < 0.05 * rep.predicted.sigma2 + 3 * rep.n_var.stderr);
    CHECK(rep.ks < 0.05);
  }
}

TEST_CASE("weak error prediction") {
  const GridSpec grid = GridSpec::torus(2 * kPi, 64, 2e-3);
  const Eigen::VectorXd x = grid.x_nodes();
  const Eigen::VectorXd phi = x.array().cos();
  SUBCASE("vanishes without interaction") {
    const MeanFieldPath path = solve_path(bump(grid), torus_model(0.0), 1.0);
    const WeakErrorPrediction p = weak_error_predict(phi, path, 1.0);
    CHECK(p.c1 == 0.0);
  }
  SUBCASE("initial part agrees with the second-order derivative flow") {
    const MeanFieldPath path = solve_path(bump(grid), torus_model(0.5), 0.5);
    const WeakErrorPrediction p = weak_error_predict(phi, path, 0.5, 4.0);
    const double coarse = weak_error_initial_mk(phi, path, 0.5, 4.0);
    const double fine = weak_error_initial_mk(phi, path, 0.5, 2.0);
    const double mk = 2 * fine - coarse;
    CHECK(std::abs(p.c1_initial - mk) < 1e-3 * std::max(1.0, std::abs(mk)));
    CHECK(std::abs(p.c1_initial) > 1e-4);
  }
}

TEST_CASE("Euler-Maruyama mean-field reference") {
  const GridSpec grid = GridSpec::torus(2 * kPi, 128, 1e-3);
  SUBCASE("free motion: each step is an exact heat step") {
    const GridDensity mu0 = bump(grid);
    const Eigen::VectorXd mu = em_mean_field(mu0, torus_model(0.0), 0.1, 10);
    const Eigen::VectorXd x = grid.x_nodes();
    CHECK(mu.dot(x.array().cos().matrix()) * grid.dx() == doctest::Approx(0.6 * 0.5 * std::exp(-0.5)).epsilon(1e-10));
    CHECK(mu.dot((2 * x.array()).sin().matrix()) * grid.dx() ==
          doctest::Approx(0.3 * 0.5 * std::exp(-2.0)).epsilon(1e-10));
    CHECK(mu.sum() * grid.dx() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("first-order in dt towards the continuous solution") {
    const ModelSpec spec = torus_model(1.0);
    const GridDensity mu0 = bump(grid);
    const Eigen::VectorXd x = grid.x_nodes();
    const Eigen::VectorXd phi = x.array().cos();
    const MeanFieldPath path = solve_path(mu0, spec, 1.0);
    const double exact = path.state(path.steps()).dot(phi) * grid.dx();
    const double e1 = em_mean_field(mu0, spec, 0.05, 20).dot(phi) * grid.dx() - exact;
    const double e2 = em_mean_field(mu0, spec, 0.025, 40).dot(phi) * grid.dx() - exact;
    CHECK(std::abs(e1) > 1e-5);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
  }
}

TEST_CASE("martingale control variate") {
  const ModelSpec spec = torus_model(0.3);
  const GridSpec pde = GridSpec::torus(2 * kPi, 64, 2e-3);
  ReplicaPlan plan;
  plan.N = 32;
  plan.R = 600;
  plan.dt = 0.02;
  plan.T = 1.0;
  plan.record_times = {1.0};
  plan.master_seed = 8;
  plan.initial_law = InitialLaw::wrapped_gaussian(0.5, 0.8);
  const GridDensity mu0 = plan.initial_law.density(spec, pde);
  const MeanFieldPath path = solve_path(mu0, spec, 1.0);
  const Eigen::VectorXd phi = pde.x_nodes().array().cos();
  const auto dual = dual_series(phi, path, 1.0);
  std::vector<Eigen::VectorXd> psi;
  for (int n = 0; n <= 50; ++n) psi.push_back(fourier_truncate(dual[n * 10], pde, 8));

  SUBCASE("fourier truncation reproduces low modes") {
    const Eigen::VectorXd c = fourier_truncate(phi, pde, 3);
    CHECK(c(0) == doctest::Approx(0.0).scale(1.0));
    CHECK(c(1) == doctest::Approx(1.0));
    CHECK(std::abs(c(2)) < 1e-12);
  }
  SUBCASE("zero-mean and variance reducing") {
    // exact initial mean of the truncated psi_0 on a fine grid
    const GridSpec fine = GridSpec::torus(2 * kPi, 256, 2e-3);
    const Eigen::VectorXd xf = fine.x_nodes();
    Eigen::VectorXd p0 = Eigen::VectorXd::Constant(fine.G, psi[0](0));
    for (int k = 1; k <= 8; ++k)
      p0 += psi[0](2 * k - 1) * (k * xf).array().cos().matrix() + psi[0](2 * k) * (k * xf).array().sin().matrix();
    const double init = plan.initial_law.density(spec, fine).values.dot(p0) * fine.dx();
    const ObservableSeries s =
        simulate_ensemble(plan, spec, {cos_observable(1, 2 * kPi)}, martingale_control(psi, 2 * kPi, plan.dt, init));
    const Eigen::VectorXd raw = s.column(0, 0), extra = s.extra_column(0);
    const double R = raw.size();
    const double me = extra.mean();
    const double se = std::sqrt((extra.array() - me).square().sum() / (R - 1) / R);
    CHECK(std::abs(me) < 4 * se);
    const Eigen::VectorXd y = raw - extra;
    const double vr = (raw.array() - raw.mean()).square().sum() / (y.array() - y.mean()).square().sum();
    CHECK(vr > 5.0);
  }
}

TEST_CASE("weak error fit on synthetic points") {
  std::vector<WeakErrorPoint> pts;
  for (int N : {256, 32, 64, 128}) {
    WeakErrorPoint p;
    p.N = N;
    p.bias = {0.5 / N + 2.0 / (double(N) * N), 1e-6 / N};
    pts.push_back(p);
  }
  const WeakErrorFit f = fit_weak_error(pts);
  CHECK(f.points.front().N == 32);
  CHECK(f.c1.value == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(f.c2.value == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(f.romberg.slope == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(f.slope.slope < -1.0);
  CHECK(f.bias_detected);
}

TEST_CASE("pairing estimates") {
  SUBCASE("independent particles have no correlation") {
    const ModelSpec spec = torus_model(0.0);
    ReplicaPlan plan;
    plan.N = 16;
    plan.R = 20000;
    plan.dt = 0.05;
    plan.T = 0.5;
    plan.record_times = {0.5};
    plan.master_seed = 4;
    plan.initial_law = InitialLaw::wrapped_gaussian(0.0, 0.5);
    for (int m : {2, 3}) {
      const ObservableSeries s = simulate_ensemble(plan, spec, power_observables(cos_observable(1, 2 * kPi), m));
      const auto pts = estimate_pairings(s, plan.N, m);
      REQUIRE(pts.size() == 1);
      CHECK(std::abs(pts[0].pairing.value) < 4 * pts[0].pairing.stderr);
      CHECK(pts[0].pairing.stderr > 0.0);
    }
  }
  SUBCASE("interaction produces an order 1/N pair correlation") {
    const ModelSpec spec = torus_model(0.8);
    ReplicaPlan plan;
    plan.R = 8000;
    plan.dt = 0.05;
    plan.T = 2.0;
    plan.record_times = {2.0};
    plan.initial_law = InitialLaw::wrapped_gaussian(0.0, 0.5);
    std::vector<ScalingPoint> all;
    for (int N : {8, 32}) {
      plan.N = N;
      plan.master_seed = 100 + N;
      const ObservableSeries s = simulate_ensemble(plan, spec, power_observables(cos_observable(1, 2 * kPi), 2));
      const auto p = estimate_pairings(s, N, 2);
      all.insert(all.end(), p.begin(), p.end());
    }
    const ScalingReport rep = scaling_report("cos", 2, all);
    REQUIRE(rep.slope.used == 2);
    CHECK(std::abs(rep.slope.slope + 1.0) < rep.slope.ci + 0.15);
  }
}

TEST_CASE("concentration helpers") {
  CHECK(w3_norm([](double y) { return std::cos(y); }, 0, 2 * kPi) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(w3_norm([](double y) { return std::sin(2 * y); }, 0, 2 * kPi) == doctest::Approx(8.0).epsilon(1e-4));

  // i.i.d. bounded samples obey Hoeffding: c_hat <= 1 when ||phi|| bounds the half-range
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int N = 64, R = 40000;
  Eigen::VectorXd vals(R);
  for (int r = 0; r < R; ++r) {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += u(gen);
    vals(r) = s / N;
  }
  const auto pts = tail_points(vals, N, 0.0, {0.5, 1.0, 2.0, 3.0, 5.0}, 1.0);
  REQUIRE(pts.size() == 4);
  for (const auto& p : pts) {
    CHECK(p.count >= 20);
    CHECK(p.c_hat < 1.0);
  }
  auto more = pts;
  for (auto p : pts) {
    p.N = 256;
    p.c_hat *= 2;
    more.push_back(p);
  }
  const ConcentrationReport rep = concentration_report(more, 1.0, 1.0);
  CHECK(rep.Ns.size() == 2);
  CHECK(rep.stability == doctest::Approx(2.0));
}

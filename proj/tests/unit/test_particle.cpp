#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "chaoslab/particle.hpp"

using namespace chaoslab;

namespace {
constexpr double kPi = std::numbers::pi;

ModelSpec cos_torus(double kappa, Dynamics d = Dynamics::Overdamped) {
  return make_model(d, Geometry::Torus, kappa, 0.0, PotentialSpec::cosine_sum({1.0}, 2 * kPi), 2 * kPi, 1.0);
}

ModelSpec ou_line(Dynamics d = Dynamics::Overdamped) {
  return make_model(d, Geometry::Line, 0.0, 1.0, PotentialSpec::gaussian_bump(1.0, 1.0, 0.0), 2 * kPi, 1.0);
}

double mean(const Eigen::VectorXd& v) { return v.mean(); }
double var(const Eigen::VectorXd& v) { return (v.array() - v.mean()).square().sum() / (v.size() - 1); }
}  // namespace

TEST_CASE("pair force") {
  auto spec = cos_torus(1.0);
  Eigen::VectorXd x(2);
  x << 0.0, kPi;
  auto F = pair_force(x, spec);
  CHECK(std::abs(F(0)) < 1e-15);
  CHECK(std::abs(F(1)) < 1e-15);

  Eigen::VectorXd y(3);
  y << 0.0, kPi / 2, kPi;
  CHECK((pair_force(y, spec) - pair_force_direct(y, spec)).cwiseAbs().maxCoeff() < 1e-14);

  auto multi = make_model(Dynamics::Overdamped, Geometry::Torus, 0.7, 0.0,
                          PotentialSpec::cosine_sum({1.0, -0.4, 0.25, 0.1}, 2 * kPi));
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> U(0.0, 2 * kPi);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd z(50);
    for (auto& v : z) v = U(g);
    auto a = pair_force(z, multi);
    auto b = pair_force_direct(z, multi);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(std::abs(a.sum()) < 1e-12 * z.size());
  }
  auto bump = make_model(Dynamics::Overdamped, Geometry::Line, 0.5, 1.0, PotentialSpec::gaussian_bump(1.0, 0.7, 0.0));
  Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(40, -3.0, 2.5);
  CHECK(std::abs(pair_force(w, bump).sum()) < 1e-12 * 40);
}

TEST_CASE("em step") {
  auto spec = ou_line();
  ParticleState s;
  s.x = Eigen::VectorXd::Constant(4, 2.0);
  CounterRng rng(5, 0);
  auto t = em_step(s, spec, 0.1, rng, 0);
  double xi[4];
  rng.normals(0, 4, xi);
  for (int i = 0; i < 4; ++i) CHECK(t.x(i) == doctest::Approx(2.0 - 0.2 + std::sqrt(0.1) * xi[i]));
  CHECK(t.time == doctest::Approx(0.1));
  CHECK_THROWS(em_step(s, spec, 0.0, rng, 0));

  auto torus = cos_torus(0.5);
  ParticleState u;
  u.x = Eigen::VectorXd::LinSpaced(64, 0.01, 2 * kPi - 0.01);
  for (int n = 0; n < 200; ++n) u = em_step(u, torus, 0.05, rng, n);
  CHECK(u.x.minCoeff() >= 0.0);
  CHECK(u.x.maxCoeff() < 2 * kPi);
}

TEST_CASE("normal generator") {
  CounterRng rng(11, 3);
  const int M = 1 << 20;
  std::vector<double> z(M);
  rng.normals(7, M, z.data());
  double m1 = 0, m2 = 0, m4 = 0;
  for (double v : z) {
    m1 += v;
    m2 += v * v;
    m4 += v * v * v * v;
  }
  m1 /= M;
  m2 /= M;
  m4 /= M;
  CHECK(std::abs(m1) < 5.0 / std::sqrt(M));
  CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / M));
  CHECK(std::abs(m4 - 3.0) < 5.0 * std::sqrt(96.0 / M));
  // Kolmogorov distance to the standard normal
  std::sort(z.begin(), z.end());
  double ks = 0.0;
  for (int i = 0; i < M; i += 17) {
    const double F = 0.5 * std::erfc(-z[i] / std::sqrt(2.0));
    ks = std::max(ks, std::max(std::abs(F - double(i) / M), std::abs(F - double(i + 1) / M)));
  }
  CHECK(ks < 1.63 / std::sqrt(M) * 1.5);
  std::vector<double> again(100);
  rng.normals(7, 100, again.data());
  CHECK(rng.normal(7, 42) == again[42]);
}

TEST_CASE("time zero record is the initial sample mean") {
  auto spec = cos_torus(0.2);
  ReplicaPlan p;
  p.N = 16;
  p.R = 4;
  p.dt = 0.1;
  p.T = 0.0;
  p.record_times = {0.0};
  p.initial_law = InitialLaw::uniform_torus();
  auto obs = cos_observable(1, 2 * kPi);
  auto s = simulate_ensemble(p, spec, {obs});
  for (int r = 0; r < 4; ++r) {
    CounterRng rng(p.master_seed, r);
    auto st = initial_state(p, spec, rng);
    double m = 0;
    for (int i = 0; i < p.N; ++i) m += std::cos(st.x(i));
    CHECK(s.value(r, 0, 0) == doctest::Approx(m / p.N).epsilon(1e-15));
  }
}

TEST_CASE("determinism across thread counts") {
  for (auto d : {Dynamics::Overdamped, Dynamics::Langevin}) {
    auto spec = cos_torus(0.3, d);
    ReplicaPlan p;
    p.N = 32;
    p.R = 37;
    p.dt = 0.02;
    p.T = 1.0;
    p.record_times = {0.0, 0.5, 1.0};
    p.initial_law = InitialLaw::wrapped_gaussian(1.0, 0.5);
    p.master_seed = 99;
    p.threads = 1;
    auto a = simulate_ensemble(p, spec, {cos_observable(1, 2 * kPi), cos_observable(2, 2 * kPi)});
    p.threads = 4;
    auto b = simulate_ensemble(p, spec, {cos_observable(1, 2 * kPi), cos_observable(2, 2 * kPi)});
    p.threads = 16;
    auto c = simulate_ensemble(p, spec, {cos_observable(1, 2 * kPi), cos_observable(2, 2 * kPi)});
    CHECK(a.values == b.values);
    CHECK(a.values == c.values);
    CHECK(a.q2 == c.q2);
  }
}

TEST_CASE("ou stationary variance") {
  auto spec = ou_line();
  ReplicaPlan p;
  p.N = 200;
  p.R = 50;
  p.dt = 0.01;
  p.T = 8.0;
  p.record_times = {4.0, 5.0, 6.0, 7.0, 8.0};
  p.initial_law = InitialLaw::gaussian_line(0.0, 2.0);
  auto s = simulate_ensemble(p, spec, {position_power(2)});
  // EM stationary variance for dX = -X dt + dB is 1 / (2 - dt)
  double m = 0;
  for (int t = 0; t < 5; ++t) m += mean(s.column(t, 0));
  m /= 5;
  CHECK(std::abs(m - 1.0 / (2.0 - p.dt)) < 0.01);
  CHECK(std::abs(m - 0.5) < 0.012);
}

TEST_CASE("langevin stationary variances") {
  auto spec = ou_line(Dynamics::Langevin);
  ReplicaPlan p;
  p.N = 200;
  p.R = 40;
  p.dt = 0.01;
  p.T = 30.0;
  p.record_times = {20.0, 22.5, 25.0, 27.5, 30.0};
  p.initial_law = InitialLaw::gaussian_line(0.0, 0.2);
  Observable v2{"v^2", [](double, double v) { return v * v; }, INFINITY};
  for (auto integ : {Integrator::EulerMaruyama, Integrator::BAOAB}) {
    p.integrator = integ;
    auto s = simulate_ensemble(p, spec, {position_power(2), v2});
    double mx = 0, mv = 0;
    for (int t = 0; t < 5; ++t) {
      mx += mean(s.column(t, 0)) / 5;
      mv += mean(s.column(t, 1)) / 5;
    }
    CAPTURE(static_cast<int>(integ));
    CHECK(std::abs(mx - 1.0) < 0.05);
    CHECK(std::abs(mv - 1.0) < 0.05);
  }
}

TEST_CASE("i.i.d. variance of the empirical mean") {
  // kappa = 0: <x, mu_t^N> has variance Var_{mu_t}(x) / N with Var_{mu_t}(x) = 1/2 + (v0 - 1/2) e^{-2t}
  auto spec = ou_line();
  ReplicaPlan p;
  p.N = 50;
  p.R = 4000;
  p.dt = 0.005;
  p.T = 1.0;
  p.record_times = {0.5, 1.0};
  p.initial_law = InitialLaw::gaussian_line(0.3, 2.0);
  auto s = simulate_ensemble(p, spec, {position_power(1)});
  for (int t = 0; t < 2; ++t) {
    const double tt = s.times[t];
    const double target = (0.5 + 1.5 * std::exp(-2 * tt)) / p.N;
    const double v = var(s.column(t, 0));
    // relative stderr of a sample variance is sqrt(2/(R-1))
    CHECK(std::abs(v / target - 1.0) < 4.0 * std::sqrt(2.0 / (p.R - 1)) + 0.01);
  }
}

TEST_CASE("weak order one in dt") {
  // kappa = 0, phi = x^2: E X_T^2 = 1/2 + (v0 - 1/2) e^{-2T}; the EM variance recursion
  // v' = (1 - dt)^2 v + dt carries a bias linear in dt.
  auto spec = ou_line();
  const double v0 = 0.01, T = 3.0;
  const double exact = 0.5 + (v0 - 0.5) * std::exp(-2 * T);
  std::vector<double> bias, se;
  for (double dt : {0.1, 0.05}) {
    ReplicaPlan p;
    p.N = 100;
    p.R = 6000;
    p.dt = dt;
    p.T = T;
    p.record_times = {T};
    p.initial_law = InitialLaw::gaussian_line(0.0, v0);
    auto s = simulate_ensemble(p, spec, {position_power(2)});
    const Eigen::VectorXd c = s.column(0, 0);
    bias.push_back(mean(c) - exact);
    se.push_back(std::sqrt(var(c) / c.size()));
    double v = v0;
    for (int n = 0; n < std::lround(T / dt); ++n) v = (1 - dt) * (1 - dt) * v + dt;
    CHECK(std::abs(mean(c) - v) < 4 * se.back());
  }
  const double ratio = bias[0] / bias[1];
  const double ratio_se = std::abs(ratio) * std::hypot(se[0] / bias[0], se[1] / bias[1]);
  CHECK(std::abs(ratio - 2.0) < 3 * ratio_se + 0.1);
}

TEST_CASE("uniform-in-time second moments") {
  auto spec = make_model(Dynamics::Overdamped, Geometry::Line, 0.3, 1.0, PotentialSpec::gaussian_bump(1.0, 1.0, 0.0));
  std::vector<double> ratios;
  for (double T : {5.0, 10.0, 20.0}) {
    ReplicaPlan p;
    p.N = 64;
    p.R = 50;
    p.dt = 0.02;
    p.T = T;
    for (int k = 0; k <= 20; ++k) p.record_times.push_back(T * k / 20);
    p.initial_law = InitialLaw::gaussian_line(0.5, 0.5);
    auto s = simulate_ensemble(p, spec, {});
    std::vector<double> means;
    for (std::size_t t = 0; t < s.times.size(); ++t) means.push_back(mean(s.q2_column(t)));
    const double q0 = means[0];
    double sup = *std::max_element(means.begin(), means.end());
    ratios.push_back(sup / (1.0 + q0));
    std::vector<double> sorted = means;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    for (double m : means) CHECK(m <= 2.0 * median);
  }
  const double C = *std::max_element(ratios.begin(), ratios.end());
  for (double r : ratios) CHECK(r <= C);
  CHECK(C < 2.0);
}

TEST_CASE("friction damps the mean velocity") {
  auto spec = cos_torus(0.2, Dynamics::Langevin);
  ReplicaPlan p;
  p.N = 100;
  p.R = 200;
  p.dt = 0.02;
  p.T = 5.0;
  p.record_times = {5.0};
  p.initial_law = InitialLaw::uniform_torus();
  Observable vel{"v", [](double, double v) { return v; }, INFINITY};
  auto s = simulate_ensemble(p, spec, {vel});
  const Eigen::VectorXd c = s.column(0, 0);
  CHECK(std::abs(mean(c)) < 3.0 * std::sqrt(var(c) / c.size()));
}

TEST_CASE("divergence accounting") {
  // a strongly repulsive bump with a huge time step blows up
  auto spec = make_model(Dynamics::Overdamped, Geometry::Line, 50.0, 40.0, PotentialSpec::gaussian_bump(5.0, 0.05, 0.0));
  ReplicaPlan p;
  p.N = 8;
  p.R = 20;
  p.dt = 1.0;
  p.T = 200.0;
  p.record_times = {200.0};
  p.initial_law = InitialLaw::gaussian_line(0.0, 1.0);
  CHECK_THROWS_AS(simulate_ensemble(p, spec, {position_power(1)}), DivergenceError);
}

TEST_CASE("plan validation") {
  ReplicaPlan p;
  p.dt = 0.03;
  p.T = 1.0;
  p.record_times = {0.5, 0.1, 0.5};
  p.finalize();
  CHECK(p.record_times.size() == 2);
  CHECK(p.record_times[0] == doctest::Approx(0.09));
  CHECK(p.record_times[1] == doctest::Approx(0.51));
  p.record_times = {2.0};
  CHECK_THROWS(p.finalize());
  p.record_times = {0.5};
  p.dt = 0.0;
  CHECK_THROWS(p.finalize());
}

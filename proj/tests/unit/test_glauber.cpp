#include <doctest.h>

#include <cmath>
#include <numbers>

#include "chaoslab/glauber.hpp"

using namespace chaoslab;

namespace {
constexpr double kPi = std::numbers::pi;

ModelSpec torus_model(double kappa) {
  return make_model(Dynamics::Overdamped, Geometry::Torus, kappa, 0.0, PotentialSpec::cosine_sum({1.0}, 2 * kPi));
}

double phi(double x) { return std::cos(x) + 0.5 * std::sin(2 * x); }
}  // namespace

TEST_CASE("initial sampler") {
  const InitialSampler s(InitialLaw::wrapped_gaussian(0.5, 0.4), torus_model(0.0), 3);
  // E cos(X) for wrapped N(m, v) is cos(m) exp(-v/2)
  CHECK(s.expectation([](double x) { return std::cos(x); }) ==
        doctest::Approx(std::cos(0.5) * std::exp(-0.2)).epsilon(1e-12));
  const InitialSampler u(InitialLaw::compact_uniform(1.0, 2.0), torus_model(0.0), 3);
  CHECK(u.expectation([](double x) { return x * x; }) == doctest::Approx(7.0 / 3.0).epsilon(1e-12));
  const GlauberSample a = s.draw(5, 2, 100), b = s.draw(5, 2, 100);
  CHECK(a.z == b.z);
  CHECK(s.resample(2, 1, 0) != s.resample(2, 1, 1));
  CHECK(s.resample(2, 1, 7) == s.resample(2, 1, 7));
}

TEST_CASE("Glauber derivative") {
  const InitialSampler s(InitialLaw::uniform_torus(), torus_model(0.0), 5);
  const GlauberSample g = s.draw(6, 0, 400);

  SUBCASE("vanishes when X ignores the coordinate") {
    const Estimate d = glauber_derivative(coordinate_functional(0), s, g, 0, 3);
    CHECK(std::abs(d.value) < 1e-12);
    CHECK(d.stderr < 1e-12);
  }
  SUBCASE("needs at least 100 resamples") {
    GlauberSample small = g;
    small.K = 50;
    CHECK_THROWS_AS(glauber_derivative(coordinate_functional(0), s, small, 0, 0), std::invalid_argument);
  }
  SUBCASE("Monte Carlo matches the closed form for linear functionals") {
    const double mean = s.expectation(phi);
    const ConfigFunctional X = linear_functional(phi);
    for (int j = 0; j < 6; ++j) {
      const Estimate d = glauber_derivative(X, s, g, 0, j);
      CHECK(std::abs(d.value - linear_glauber_derivative(phi, mean, g.z, j)) < 3.5 * d.stderr);
    }
  }
  SUBCASE("closed form check and the linear-derivative bound") {
    GlauberPlan plan;
    plan.N = 5;
    plan.outer = 20;
    plan.K = 200;
    const LinearGlauberReport rep = linear_glauber_check(phi, 1.5, s, plan);
    CHECK(rep.checked == 100);
    CHECK(rep.max_bound_ratio <= 1.0);
    CHECK(rep.max_z < 4.5);
  }
}

TEST_CASE("Efron-Stein") {
  GlauberPlan plan;
  plan.N = 6;
  plan.outer = 600;
  plan.K = 100;
  plan.seed = 17;

  SUBCASE("single coordinate is an equality case") {
    const InitialSampler s(InitialLaw::compact_uniform(0.5, 2.5), torus_model(0.0), plan.seed);
    const EfronSteinReport rep = efron_stein_check(coordinate_functional(0), s, plan);
    CHECK(rep.variance.value == doctest::Approx(4.0 / 12.0).epsilon(0.15));
    CHECK(rep.equal);
    CHECK(rep.holds);
    for (int j = 1; j < plan.N; ++j) CHECK(std::abs(rep.mean_derivative[j].value) < 1e-12);
  }
  SUBCASE("linear functional is an equality case") {
    const InitialSampler s(InitialLaw::wrapped_gaussian(0.0, 1.0), torus_model(0.0), plan.seed);
    const EfronSteinReport rep = efron_stein_check(linear_functional(phi), s, plan);
    CHECK(rep.equal);
    for (const auto& d : rep.mean_derivative) CHECK(std::abs(d.value) < 4 * d.stderr);
  }
  SUBCASE("PDE-pushed functional satisfies the inequality") {
    const ModelSpec spec = torus_model(1.0);
    const GridSpec grid = GridSpec::torus(2 * kPi, 16, 5e-3);
    const Eigen::VectorXd g = grid.x_nodes().unaryExpr([](double x) { return phi(x); });
    const InitialSampler s(InitialLaw::wrapped_gaussian(0.0, 1.0), spec, plan.seed);
    GlauberPlan p = plan;
    p.N = 4;
    p.outer = 150;
    const EfronSteinReport rep = efron_stein_check(pde_functional(g, spec, grid, 0.5), s, p);
    CHECK(rep.holds);
    CHECK(rep.variance.value > 0.0);
    for (const auto& d : rep.mean_derivative) CHECK(std::abs(d.value) < 4 * d.stderr);
  }
  SUBCASE("output does not depend on the thread count") {
    const InitialSampler s(InitialLaw::uniform_torus(), torus_model(0.0), plan.seed);
    GlauberPlan p = plan;
    p.outer = 50;
    const EfronSteinReport a = efron_stein_check(linear_functional(phi), s, p);
    p.threads = 4;
    const EfronSteinReport b = efron_stein_check(linear_functional(phi), s, p);
    CHECK(a.variance.value == b.variance.value);
    CHECK(a.glauber_energy.value == b.glauber_energy.value);
  }
}

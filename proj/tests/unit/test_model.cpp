#include <doctest.h>

#include <cmath>
#include <numbers>

#include "chaoslab/grid.hpp"
#include "chaoslab/model.hpp"

using namespace chaoslab;

namespace {
constexpr double kPi = std::numbers::pi;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(v.size());
  int i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double moment(const Eigen::VectorXd& w, const Eigen::VectorXd& x, int p, double cell) {
  return (w.array() * x.array().pow(p)).sum() * cell;
}
}  // namespace

TEST_CASE("drift examples") {
  auto line = make_model(Dynamics::Overdamped, Geometry::Line, 0.0, 1.0, PotentialSpec::gaussian_bump(1.0, 1.0, 0.0));
  PointMeasure none({0.0});
  CHECK(drift(vec({2.0}), none, line)(0) == doctest::Approx(-2.0));

  auto lang = make_model(Dynamics::Langevin, Geometry::Line, 0.0, 1.0, PotentialSpec::gaussian_bump(1.0, 1.0, 0.0),
                         2 * kPi, 2.0);
  auto b = drift(vec({1.0, 3.0}), none, lang);
  CHECK(b(0) == doctest::Approx(3.0));
  CHECK(b(1) == doctest::Approx(-4.0));

  auto torus = make_model(Dynamics::Overdamped, Geometry::Torus, 1.0, 0.0, PotentialSpec::cosine_sum({1.0}, 2 * kPi));
  CHECK(drift(vec({kPi / 2}), PointMeasure({0.0}), torus)(0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(drift(vec({1.0, 2.0}), none, torus), std::invalid_argument);
  CHECK_THROWS_AS(drift(vec({1.0}), none, lang), std::invalid_argument);
}

TEST_CASE("action-reaction on two particles") {
  for (auto w : {PotentialSpec::cosine_sum({1.0, -0.3, 0.2}, 2 * kPi), PotentialSpec::gaussian_bump(0.7, 0.5, 2 * kPi)}) {
    auto spec = make_model(Dynamics::Overdamped, Geometry::Torus, 0.8, 0.0, w);
    const double x1 = 0.4, x2 = 2.9;
    const double f12 = spec.kappa * spec.interaction.dW(x1 - x2);
    const double f21 = spec.kappa * spec.interaction.dW(x2 - x1);
    CHECK(f12 == doctest::Approx(-f21).epsilon(1e-13));
    // drift of each particle against a point mass at the other
    const double b1 = drift(vec({x1}), PointMeasure({x2}), spec)(0);
    const double b2 = drift(vec({x2}), PointMeasure({x1}), spec)(0);
    CHECK(b1 == doctest::Approx(-b2).epsilon(1e-13));
  }
}

TEST_CASE("potential evaluators") {
  const double h = 1e-3;
  std::vector<PotentialSpec> pots = {
      PotentialSpec::cosine_sum({1.0, 0.5, -0.25}, 2 * kPi),
      PotentialSpec::gaussian_bump(1.5, 0.6, 2 * kPi),
      PotentialSpec::gaussian_bump(1.5, 0.6, 0.0),
  };
  std::vector<double> tab;
  for (int i = 0; i < 32; ++i) tab.push_back(std::cos(2 * kPi * i / 32) + 0.3 * std::cos(4 * kPi * i / 32));
  pots.push_back(PotentialSpec::tabulated(tab, 2 * kPi));
  std::vector<double> tline{4.0};
  for (int i = 0; i < 41; ++i) {
    const double x = -4.0 + 8.0 * i / 40;
    tline.push_back(std::exp(-x * x));
  }
  pots.push_back(PotentialSpec::tabulated(tline, 0.0));

  for (const auto& p : pots) {
    CAPTURE(p.family_name());
    for (int i = 0; i <= 40; ++i) {
      const double x = -3.0 + 0.15 * i + 0.0137;
      const double fd = (p.W(x + h) - p.W(x - h)) / (2 * h);
      if (p.family == PotentialSpec::Family::Tabulated) {
        CHECK(std::abs(fd - p.dW(x)) < 1e-6);
      } else {
        // O(h^2) error removed by one Richardson step
        const double fd2 = (p.W(x + h / 2) - p.W(x - h / 2)) / h;
        CHECK(std::abs((4 * fd2 - fd) / 3 - p.dW(x)) < 1e-9);
      }
      CHECK(std::abs(p.W(x) - p.W(-x)) < 1e-12);
    }
  }

  auto c = PotentialSpec::cosine_sum({1.0, 0.5}, 2 * kPi);
  CHECK(c.fourier(1) == doctest::Approx(0.5));
  CHECK(c.fourier(-2) == doctest::Approx(0.25));
  CHECK(c.fourier(3) == 0.0);
  CHECK(c.h_stable());
  CHECK_FALSE(PotentialSpec::cosine_sum({1.0, -0.1}, 2 * kPi).h_stable());

  // the periodized Gaussian has Fourier coefficients A s sqrt(2 pi) exp(-n^2 s^2 / 2) / L
  auto g = PotentialSpec::gaussian_bump(1.0, 0.5, 2 * kPi);
  for (int n = 0; n <= 4; ++n)
    CHECK(g.fourier(n) == doctest::Approx(0.5 * std::sqrt(2 * kPi) * std::exp(-n * n * 0.125) / (2 * kPi)).epsilon(1e-10));
  CHECK(g.h_stable());

  // a tabulated copy of a cosine reproduces its Fourier coefficients up to spline error
  std::vector<double> cosvals;
  for (int i = 0; i < 64; ++i) cosvals.push_back(std::cos(2 * kPi * i / 64));
  auto tc = PotentialSpec::tabulated(cosvals, 2 * kPi);
  CHECK(tc.fourier(1) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(std::abs(tc.fourier(2)) < 1e-6);
}

TEST_CASE("model validation") {
  CHECK_THROWS(make_model(Dynamics::Overdamped, Geometry::Line, 0.0, 0.0, PotentialSpec::gaussian_bump(1, 1, 0)));
  CHECK_THROWS(make_model(Dynamics::Overdamped, Geometry::Torus, -1.0, 0.0, PotentialSpec::cosine_sum({1}, 2 * kPi)));
  CHECK_THROWS(make_model(Dynamics::Overdamped, Geometry::Torus, 0.1, 0.0, PotentialSpec::cosine_sum({1}, 3.0)));
  auto s = make_model(Dynamics::Overdamped, Geometry::Torus, 0.1, 0.0, PotentialSpec::cosine_sum({1}, 2 * kPi));
  CHECK(s.beta == 2.0);
  s.dim = 2;
  CHECK_THROWS(s.validate());
  auto l = make_model(Dynamics::Langevin, Geometry::Torus, 0.1, 0.0, PotentialSpec::cosine_sum({1}, 2 * kPi));
  CHECK(l.beta == 1.0);
  CHECK(l.phase_dim() == 2);

  // torus confinement matches a x^2/2 to fourth order at the origin
  auto conf = make_model(Dynamics::Overdamped, Geometry::Torus, 0.0, 2.0, PotentialSpec::cosine_sum({1}, 2 * kPi));
  CHECK(conf.A(0.01) == doctest::Approx(1e-4).epsilon(1e-5));
  CHECK(conf.dA(0.01) == doctest::Approx(0.02).epsilon(1e-4));
  CHECK(conf.A(2 * kPi + 0.3) == doctest::Approx(conf.A(0.3)));
}

TEST_CASE("gibbs steady state") {
  SUBCASE("kappa = 0 line Langevin is the product Gaussian") {
    auto spec = make_model(Dynamics::Langevin, Geometry::Line, 0.0, 1.0, PotentialSpec::gaussian_bump(1, 1, 0), 2 * kPi, 1.0);
    auto grid = GridSpec::line(line_box_halfwidth(1.0), 128, 1e-3).with_velocity(64, 8.0);
    auto M = gibbs_steady_state(spec, grid, 1e-12);
    CHECK(M.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(M.values.minCoeff() >= 0.0);
    const Eigen::VectorXd x = grid.x_nodes(), v = grid.v_nodes();
    const Eigen::VectorXd rho = M.marginal();
    CHECK(std::abs(moment(rho, x, 2, grid.dx()) - 1.0) < 1e-10);
    Eigen::VectorXd vm = Eigen::VectorXd::Zero(grid.G_v);
    for (int i = 0; i < grid.G; ++i)
      for (int j = 0; j < grid.G_v; ++j) vm(j) += M.values(i * grid.G_v + j) * grid.dx();
    CHECK(std::abs(moment(vm, v, 2, grid.dv()) - 1.0) < 1e-10);
    CHECK(gibbs_residual(spec, M) < 1e-12);
  }
  SUBCASE("kappa = 0 torus without confinement is uniform") {
    auto spec = make_model(Dynamics::Overdamped, Geometry::Torus, 0.0, 0.0, PotentialSpec::cosine_sum({1}, 2 * kPi));
    auto grid = GridSpec::torus(2 * kPi, 64, 1e-3);
    auto M = gibbs_steady_state(spec, grid);
    CHECK((M.values.array() - 1.0 / (2 * kPi)).abs().maxCoeff() < 1e-14);
  }
  SUBCASE("interacting torus state is self-consistent") {
    auto spec = make_model(Dynamics::Overdamped, Geometry::Torus, 0.2, 0.5, PotentialSpec::cosine_sum({1}, 2 * kPi), 2 * kPi, 1.0);
    auto grid = GridSpec::torus(2 * kPi, 64, 1e-3);
    auto M = gibbs_steady_state(spec, grid, 1e-13);
    CHECK(gibbs_residual(spec, M) < 1e-10);
    CHECK(M.mass() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(M.values.minCoeff() > 0.0);
    // independent check of the fixed point from the definition
    const Eigen::VectorXd x = grid.x_nodes();
    double worst = 0.0, Z = 0.0;
    Eigen::VectorXd target(grid.G);
    for (int i = 0; i < grid.G; ++i) {
      double conv = 0.0;
      for (int j = 0; j < grid.G; ++j) conv += std::cos(x(i) - x(j)) * M.values(j) * grid.dx();
      target(i) = std::exp(-(spec.A(x(i)) + 0.2 * conv));
      Z += target(i) * grid.dx();
    }
    for (int i = 0; i < grid.G; ++i) worst = std::max(worst, std::abs(target(i) / Z - M.values(i)));
    CHECK(worst < 1e-10);
  }
  SUBCASE("contraction guard") {
    auto spec = make_model(Dynamics::Overdamped, Geometry::Torus, 0.6, 0.0, PotentialSpec::cosine_sum({1}, 2 * kPi));
    CHECK_THROWS_AS(gibbs_steady_state(spec, GridSpec::torus(2 * kPi, 64, 1e-3)), std::invalid_argument);
  }
}

TEST_CASE("grid measure convolution") {
  auto spec = make_model(Dynamics::Overdamped, Geometry::Torus, 1.0, 0.0, PotentialSpec::cosine_sum({1}, 2 * kPi));
  auto grid = GridSpec::torus(2 * kPi, 64, 1e-3);
  const Eigen::VectorXd x = grid.x_nodes();
  // rho = (1 + 0.5 cos x) / 2pi: (W' * rho)(y) = -0.25 sin y
  Eigen::VectorXd rho = (1.0 + 0.5 * x.array().cos()) / (2 * kPi);
  GridMeasure m(x, rho, grid.dx());
  for (double y : {0.3, 1.7, 4.0}) CHECK(m.grad_conv(y, spec.interaction) == doctest::Approx(-0.25 * std::sin(y)).epsilon(1e-12));
}

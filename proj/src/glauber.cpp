#include "chaoslab/glauber.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "chaoslab/meanfield.hpp"
#include "chaoslab/rng.hpp"

namespace chaoslab {

namespace {

// Step tags for the two uniforms of a resample draw.
constexpr std::uint64_t kResampleStep = 0x9e3779b97f4a7c15ULL;

Estimate mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0};
}

}  // namespace

InitialSampler::InitialSampler(InitialLaw law, ModelSpec spec, std::uint64_t seed)
    : law_(law), spec_(std::move(spec)), seed_(seed) {
  law_.validate(spec_);
}

GlauberSample InitialSampler::draw(int N, std::uint64_t replica, int K) const {
  const CounterRng rng(seed_, replica);
  GlauberSample s;
  s.K = K;
  s.z.resize(N);
  for (int i = 0; i < N; ++i)
    s.z(i) = law_.sample(rng.uniform(CounterRng::kInitStep, 2 * i), rng.uniform(CounterRng::kInitStep, 2 * i + 1), spec_);
  return s;
}

double InitialSampler::resample(std::uint64_t replica, int j, int i) const {
  const CounterRng rng(seed_, replica);
  const std::uint64_t idx = (static_cast<std::uint64_t>(j) << 32) | static_cast<std::uint32_t>(i);
  return law_.sample(rng.uniform(kResampleStep, 2 * idx), rng.uniform(kResampleStep, 2 * idx + 1), spec_);
}

double InitialSampler::expectation(const std::function<double(double)>& phi) const {
  auto f = [&](double x) { return phi(spec_.wrap(x)); };
  switch (law_.kind) {
    case InitialLaw::Kind::GaussianLine:
    case InitialLaw::Kind::WrappedGaussianTorus: {
      // trapezoid on +-12 sd; exponentially accurate for smooth phi
      const double sd = std::sqrt(law_.p2), h = sd / 200.0;
      double s = 0.0;
      for (int k = -2400; k <= 2400; ++k) {
        const double u = k * h / sd;
        s += f(law_.p1 + k * h) * std::exp(-0.5 * u * u);
      }
      return s * h / (sd * std::sqrt(2.0 * 3.14159265358979323846));
    }
    case InitialLaw::Kind::UniformTorus: {
      const int n = 4096;
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += f(spec_.period * k / n);
      return s / n;
    }
    case InitialLaw::Kind::CompactUniform: {
      // composite Simpson
      const int n = 4000;
      const double a = law_.p1, h = (law_.p2 - law_.p1) / n;
      double s = f(a) + f(law_.p2);
      for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
      return s * h / 3.0 / (law_.p2 - law_.p1);
    }
  }
  return 0.0;
}

Estimate glauber_derivative(const ConfigFunctional& X, const InitialSampler& sampler, const GlauberSample& sample,
                            std::uint64_t replica, int j) {
  if (sample.K < 100) throw std::invalid_argument("glauber_derivative: K must be at least 100");
  if (j < 0 || j >= sample.z.size()) throw std::invalid_argument("glauber_derivative: index out of range");
  const double x0 = X(sample.z);
  Eigen::VectorXd z = sample.z;
  std::vector<double> vals(sample.K);
  for (int i = 0; i < sample.K; ++i) {
    z(j) = sampler.resample(replica, j, i);
    vals[i] = X(z);
  }
  const Estimate m = mean_se(vals);
  return {x0 - m.value, m.stderr};
}

double linear_glauber_derivative(const std::function<double(double)>& phi, double phi_mean, const Eigen::VectorXd& z,
                                 int j) {
  return (phi(z(j)) - phi_mean) / static_cast<double>(z.size());
}

EfronSteinReport efron_stein_check(const ConfigFunctional& X, const InitialSampler& sampler, const GlauberPlan& plan) {
  const int M = plan.outer, N = plan.N;
  std::vector<double> values(M), energy(M);
  std::vector<std::vector<double>> deriv(N, std::vector<double>(M));
  parallel_for(M, plan.threads, [&](int r) {
    const GlauberSample s = sampler.draw(N, static_cast<std::uint64_t>(r), plan.K);
    values[r] = X(s.z);
    double e = 0.0;
    for (int j = 0; j < N; ++j) {
      const Estimate d = glauber_derivative(X, sampler, s, static_cast<std::uint64_t>(r), j);
      deriv[j][r] = d.value;
      // E[d^2] overshoots |D_j X|^2 by the inner-mean variance
      e += d.value * d.value - d.stderr * d.stderr;
    }
    energy[r] = e;
  });
  EfronSteinReport rep;
  const Estimate mv = mean_se(values);
  double ss = 0.0, s4 = 0.0;
  for (double v : values) {
    const double c = (v - mv.value) * (v - mv.value);
    ss += c;
    s4 += c * c;
  }
  const double var = ss / (M - 1);
  // large-sample stderr of the sample variance
  const double m4 = s4 / M;
  rep.variance = {var, std::sqrt(std::max(0.0, (m4 - var * var * (M - 3.0) / (M - 1.0)) / M))};
  rep.glauber_energy = mean_se(energy);
  rep.ci = 1.96 * std::hypot(rep.variance.stderr, rep.glauber_energy.stderr);
  rep.holds = rep.variance.value <= rep.glauber_energy.value + rep.ci;
  rep.equal = std::abs(rep.variance.value - rep.glauber_energy.value) <= rep.ci;
  for (int j = 0; j < N; ++j) rep.mean_derivative.push_back(mean_se(deriv[j]));
  return rep;
}

LinearGlauberReport linear_glauber_check(const std::function<double(double)>& phi, double sup_phi,
                                         const InitialSampler& sampler, const GlauberPlan& plan) {
  const ConfigFunctional X = linear_functional(phi);
  const double mean = sampler.expectation(phi);
  LinearGlauberReport rep;
  for (int r = 0; r < plan.outer; ++r) {
    const GlauberSample s = sampler.draw(plan.N, static_cast<std::uint64_t>(r), plan.K);
    for (int j = 0; j < plan.N; ++j) {
      const double exact = linear_glauber_derivative(phi, mean, s.z, j);
      const Estimate mc = glauber_derivative(X, sampler, s, static_cast<std::uint64_t>(r), j);
      const double z = mc.stderr > 0.0 ? std::abs(mc.value - exact) / mc.stderr : 0.0;
      rep.max_z = std::max(rep.max_z, z);
      rep.within3 += z <= 3.0;
      rep.max_bound_ratio = std::max(rep.max_bound_ratio, std::abs(exact) * plan.N / (2 * sup_phi));
      ++rep.checked;
    }
  }
  return rep;
}

ConfigFunctional coordinate_functional(int index) {
  return [index](const Eigen::VectorXd& z) { return z(index); };
}

ConfigFunctional linear_functional(std::function<double(double)> phi) {
  return [phi = std::move(phi)](const Eigen::VectorXd& z) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) s += phi(z(i));
    return s / static_cast<double>(z.size());
  };
}

ConfigFunctional pde_functional(const Eigen::VectorXd& phi, const ModelSpec& spec, const GridSpec& grid, double t,
                                double width) {
  if (grid.kinetic() || spec.dynamics != Dynamics::Overdamped)
    throw std::invalid_argument("pde_functional: Overdamped spatial grids only");
  auto op = std::make_shared<const MeanFieldOperator>(spec, grid);
  Eigen::MatrixXd S(grid.G, grid.G);
  for (int j = 0; j < grid.G; ++j) S.col(j) = mollified_dirac(grid, j, width);
  return [op, S, phi, grid, t](const Eigen::VectorXd& z) {
    // linear (cloud-in-cell) split between the two neighbouring nodes, then smoothing
    Eigen::VectorXd w = Eigen::VectorXd::Zero(grid.G);
    const bool torus = grid.geometry == Geometry::Torus;
    const double dx = grid.dx(), off = torus ? 0.0 : 0.5;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double u = (z(i) - grid.x_min) / dx - off;
      int a = static_cast<int>(std::floor(u));
      const double f = u - a;
      int b = a + 1;
      if (torus) {
        a = ((a % grid.G) + grid.G) % grid.G;
        b = b % grid.G;
      } else {
        if (a < 0 || b >= grid.G) throw std::invalid_argument("pde_functional: particle outside the line box");
      }
      w(a) += (1.0 - f) / z.size();
      w(b) += f / z.size();
    }
    const MeanFieldPath path(op, S * w, t);
    return path.state(path.steps()).dot(phi) * dx;
  };
}

}  // namespace chaoslab

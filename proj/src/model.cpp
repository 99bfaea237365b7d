#include "chaoslab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "chaoslab/grid.hpp"

namespace chaoslab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Second derivatives of the interpolating cubic spline through equally spaced values.
std::vector<double> spline_moments(const std::vector<double>& y, double h, bool periodic) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (!periodic && (i == 0 || i == n - 1)) {
      A(i, i) = 1.0;
      continue;
    }
    const int im = (i - 1 + n) % n;
    const int ip = (i + 1) % n;
    A(i, im) += 1.0;
    A(i, i) += 4.0;
    A(i, ip) += 1.0;
    rhs(i) = 6.0 * (y[ip] - 2.0 * y[i] + y[im]) / (h * h);
  }
  Eigen::VectorXd m = A.partialPivLu().solve(rhs);
  return {m.data(), m.data() + n};
}

struct SplineEval {
  double value;
  double slope;
};

SplineEval spline_eval(const double* y, const double* m, int n, double h, double s, bool periodic) {
  // s is the coordinate in node units
  int i = static_cast<int>(std::floor(s));
  double t = s - i;
  int j;
  if (periodic) {
    i = ((i % n) + n) % n;
    j = (i + 1) % n;
  } else {
    if (i < 0) return {y[0], 0.0};
    if (i >= n - 1) return {y[n - 1], 0.0};
    j = i + 1;
  }
  const double u = 1.0 - t;
  const double v = y[i] * u + y[j] * t + h * h / 6.0 * ((u * u * u - u) * m[i] + (t * t * t - t) * m[j]);
  const double d = (y[j] - y[i]) / h + h / 6.0 * (-(3.0 * u * u - 1.0) * m[i] + (3.0 * t * t - 1.0) * m[j]);
  return {v, d};
}

double wrap_to(double x, double L) { return x - L * std::floor(x / L); }

}  // namespace

std::string to_string(Dynamics d) { return d == Dynamics::Langevin ? "langevin" : "overdamped"; }
std::string to_string(Geometry g) { return g == Geometry::Torus ? "torus" : "line"; }

Dynamics parse_dynamics(const std::string& s) {
  if (s == "langevin") return Dynamics::Langevin;
  if (s == "overdamped") return Dynamics::Overdamped;
  throw std::invalid_argument("unknown dynamics '" + s + "' (langevin|overdamped)");
}

Geometry parse_geometry(const std::string& s) {
  if (s == "torus") return Geometry::Torus;
  if (s == "line") return Geometry::Line;
  throw std::invalid_argument("unknown geometry '" + s + "' (torus|line)");
}

std::string to_string(PotentialSpec::Family f) {
  switch (f) {
    case PotentialSpec::Family::CosineSum: return "cosine";
    case PotentialSpec::Family::GaussianBump: return "gaussian";
    case PotentialSpec::Family::Tabulated: return "tabulated";
  }
  return "?";
}

PotentialSpec::Family parse_family(const std::string& s) {
  if (s == "cosine") return PotentialSpec::Family::CosineSum;
  if (s == "gaussian") return PotentialSpec::Family::GaussianBump;
  if (s == "tabulated") return PotentialSpec::Family::Tabulated;
  throw std::invalid_argument("unknown potential family '" + s + "' (cosine|gaussian|tabulated)");
}

std::string PotentialSpec::family_name() const { return to_string(family); }

PotentialSpec PotentialSpec::cosine_sum(std::vector<double> w, double period) {
  if (w.empty()) throw std::invalid_argument("cosine potential needs at least one coefficient");
  PotentialSpec p;
  p.family = Family::CosineSum;
  p.params = std::move(w);
  p.period = period;
  return p;
}

PotentialSpec PotentialSpec::gaussian_bump(double amplitude, double width, double period) {
  if (!(width > 0.0)) throw std::invalid_argument("gaussian potential width must be positive");
  PotentialSpec p;
  p.family = Family::GaussianBump;
  p.params = {amplitude, width};
  p.period = period;
  return p;
}

PotentialSpec PotentialSpec::tabulated(std::vector<double> params, double period) {
  PotentialSpec p;
  p.family = Family::Tabulated;
  p.period = period;
  p.params = std::move(params);
  if (period > 0.0) {
    const int n = static_cast<int>(p.params.size());
    if (n < 4) throw std::invalid_argument("tabulated potential needs at least 4 values");
    p.spline_m = spline_moments(p.params, period / n, true);
  } else {
    if (p.params.size() < 5) throw std::invalid_argument("tabulated line potential needs {H, >= 4 values}");
    const double H = p.params[0];
    if (!(H > 0.0)) throw std::invalid_argument("tabulated half-width must be positive");
    std::vector<double> y(p.params.begin() + 1, p.params.end());
    const int n = static_cast<int>(y.size());
    p.spline_m = spline_moments(y, 2.0 * H / (n - 1), false);
  }
  return p;
}

double PotentialSpec::W(double x) const {
  switch (family) {
    case Family::CosineSum: {
      const double k0 = period > 0.0 ? kTwoPi / period : 1.0;
      double s = 0.0;
      for (std::size_t n = 0; n < params.size(); ++n) s += params[n] * std::cos((n + 1) * k0 * x);
      return s;
    }
    case Family::GaussianBump: {
      const double A = params[0], s2 = params[1] * params[1];
      if (period <= 0.0) return A * std::exp(-x * x / (2.0 * s2));
      const double xr = wrap_to(x + 0.5 * period, period) - 0.5 * period;
      const int images = static_cast<int>(std::ceil(9.0 * params[1] / period)) + 1;
      double s = 0.0;
      for (int j = -images; j <= images; ++j) {
        const double y = xr - j * period;
        s += std::exp(-y * y / (2.0 * s2));
      }
      return A * s;
    }
    case Family::Tabulated: {
      if (period > 0.0) {
        const int n = static_cast<int>(params.size());
        const double h = period / n;
        return spline_eval(params.data(), spline_m.data(), n, h, x / h, true).value;
      }
      const int n = static_cast<int>(params.size()) - 1;
      const double H = params[0], h = 2.0 * H / (n - 1);
      return spline_eval(params.data() + 1, spline_m.data(), n, h, (x + H) / h, false).value;
    }
  }
  return 0.0;
}

double PotentialSpec::dW(double x) const {
  switch (family) {
    case Family::CosineSum: {
      const double k0 = period > 0.0 ? kTwoPi / period : 1.0;
      double s = 0.0;
      for (std::size_t n = 0; n < params.size(); ++n) {
        const double k = (n + 1) * k0;
        s -= params[n] * k * std::sin(k * x);
      }
      return s;
    }
    case Family::GaussianBump: {
      const double A = params[0], s2 = params[1] * params[1];
      if (period <= 0.0) return -A * x / s2 * std::exp(-x * x / (2.0 * s2));
      const double xr = wrap_to(x + 0.5 * period, period) - 0.5 * period;
      const int images = static_cast<int>(std::ceil(9.0 * params[1] / period)) + 1;
      double s = 0.0;
      for (int j = -images; j <= images; ++j) {
        const double y = xr - j * period;
        s -= y / s2 * std::exp(-y * y / (2.0 * s2));
      }
      return A * s;
    }
    case Family::Tabulated: {
      if (period > 0.0) {
        const int n = static_cast<int>(params.size());
        const double h = period / n;
        return spline_eval(params.data(), spline_m.data(), n, h, x / h, true).slope;
      }
      const int n = static_cast<int>(params.size()) - 1;
      const double H = params[0], h = 2.0 * H / (n - 1);
      return spline_eval(params.data() + 1, spline_m.data(), n, h, (x + H) / h, false).slope;
    }
  }
  return 0.0;
}

double PotentialSpec::fourier(int n) const {
  if (period <= 0.0) throw std::invalid_argument("Fourier coefficients need a periodic potential");
  if (family == Family::CosineSum) {
    const int k = std::abs(n);
    if (k == 0 || k > static_cast<int>(params.size())) return 0.0;
    return 0.5 * params[k - 1];
  }
  const int M = 8192;
  const double h = period / M;
  double s = 0.0;
  for (int i = 0; i < M; ++i) s += W(i * h) * std::cos(kTwoPi * n * i / M);
  return s / M;
}

double PotentialSpec::sup_abs() const {
  if (family == Family::CosineSum) {
    double s = 0.0;
    for (double w : params) s += std::abs(w);
    return s;
  }
  double lo, hi;
  if (period > 0.0) {
    lo = 0.0;
    hi = period;
  } else if (family == Family::GaussianBump) {
    return std::abs(params[0]);
  } else {
    lo = -params[0];
    hi = params[0];
  }
  const int M = 8192;
  double s = 0.0;
  for (int i = 0; i <= M; ++i) s = std::max(s, std::abs(W(lo + (hi - lo) * i / M)));
  return s;
}

bool PotentialSpec::h_stable() const {
  if (family == Family::CosineSum)
    return std::all_of(params.begin(), params.end(), [](double w) { return w >= 0.0; });
  if (period <= 0.0) return false;
  for (int n = 0; n <= 64; ++n)
    if (fourier(n) < -1e-12) return false;
  return true;
}

void ModelSpec::validate() const {
  if (dim != 1) throw std::invalid_argument("only dim = 1 is implemented");
  if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be nonnegative");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(a >= 0.0)) throw std::invalid_argument("a must be nonnegative");
  if (geometry == Geometry::Line) {
    if (!(a > 0.0)) throw std::invalid_argument("line geometry needs confinement a > 0");
    if (interaction.family != PotentialSpec::Family::CosineSum && interaction.period != 0.0)
      throw std::invalid_argument("line geometry needs a non-periodic interaction potential");
  } else {
    if (!(period > 0.0)) throw std::invalid_argument("torus period must be positive");
    if (std::abs(interaction.period - period) > 1e-12 * period)
      throw std::invalid_argument("interaction period does not match the torus period");
  }
  const double span = geometry == Geometry::Torus ? period : 10.0;
  for (int i = 0; i <= 64; ++i) {
    const double x = span * i / 64.0;
    const double w = interaction.W(x);
    if (std::abs(w - interaction.W(-x)) > 1e-10 * (1.0 + std::abs(w)))
      throw std::invalid_argument("interaction potential is not even");
  }
}

double ModelSpec::A(double x) const {
  if (geometry == Geometry::Line) return 0.5 * a * x * x;
  const double q = period / kTwoPi;
  return a * q * q * (1.0 - std::cos(x / q));
}

double ModelSpec::dA(double x) const {
  if (geometry == Geometry::Line) return a * x;
  const double q = period / kTwoPi;
  return a * q * std::sin(x / q);
}

bool ModelSpec::gibbs_contractive() const { return kappa * beta * interaction.sup_abs() < 1.0; }

double ModelSpec::wrap(double x) const {
  if (geometry == Geometry::Line) return x;
  double y = x - period * std::floor(x / period);
  return y >= period ? 0.0 : y;
}

ModelSpec make_model(Dynamics d, Geometry g, double kappa, double a, PotentialSpec w, double period,
                     double beta) {
  ModelSpec s;
  s.dynamics = d;
  s.geometry = g;
  s.period = period;
  s.kappa = kappa;
  s.a = a;
  s.beta = beta > 0.0 ? beta : (d == Dynamics::Langevin ? 1.0 : 2.0);
  s.interaction = std::move(w);
  s.validate();
  return s;
}

PointMeasure::PointMeasure(std::vector<double> x, std::vector<double> weights)
    : x_(std::move(x)), w_(std::move(weights)) {
  if (x_.size() != w_.size()) throw std::invalid_argument("point measure: size mismatch");
}

PointMeasure::PointMeasure(std::vector<double> x) : x_(std::move(x)), w_(x_.size(), 1.0 / x_.size()) {}

double PointMeasure::grad_conv(double x, const PotentialSpec& w) const {
  double s = 0.0;
  for (std::size_t j = 0; j < x_.size(); ++j) s += w_[j] * w.dW(x - x_[j]);
  return s;
}

Eigen::VectorXd drift(const Eigen::VectorXd& z, const MeasureHandle& mu, const ModelSpec& spec) {
  if (z.size() != spec.phase_dim()) {
    std::ostringstream os;
    os << "drift: phase point has " << z.size() << " coordinates, model expects " << spec.phase_dim();
    throw std::invalid_argument(os.str());
  }
  const double x = z(0);
  const double force = -spec.dA(x) - spec.kappa * mu.grad_conv(x, spec.interaction);
  if (spec.dynamics == Dynamics::Overdamped) return Eigen::VectorXd::Constant(1, force);
  Eigen::VectorXd b(2);
  b << z(1), -0.5 * spec.beta * z(1) + force;
  return b;
}

// ---- grid ----

GridSpec GridSpec::torus(double L, int G, double dt_pde) {
  GridSpec g;
  g.geometry = Geometry::Torus;
  g.G = G;
  g.x_min = 0.0;
  g.x_max = L;
  g.dt_pde = dt_pde;
  return g;
}

GridSpec GridSpec::line(double X, int G, double dt_pde) {
  GridSpec g;
  g.geometry = Geometry::Line;
  g.G = G;
  g.x_min = -X;
  g.x_max = X;
  g.dt_pde = dt_pde;
  return g;
}

GridSpec GridSpec::with_velocity(int gv, double vmax) const {
  GridSpec g = *this;
  g.G_v = gv;
  g.v_max = vmax;
  return g;
}

Eigen::VectorXd GridSpec::x_nodes() const {
  const double off = geometry == Geometry::Torus ? 0.0 : 0.5;
  return Eigen::VectorXd::NullaryExpr(G, [&](Eigen::Index i) { return x_min + (i + off) * dx(); });
}

Eigen::VectorXd GridSpec::v_nodes() const {
  if (!kinetic()) return Eigen::VectorXd();
  return Eigen::VectorXd::NullaryExpr(G_v, [&](Eigen::Index j) { return -v_max + (j + 0.5) * dv(); });
}

void GridSpec::validate(const ModelSpec& spec) const {
  auto pow2 = [](int n) { return n >= 8 && (n & (n - 1)) == 0; };
  if (!pow2(G)) throw std::invalid_argument("grid: G must be a power of two >= 8");
  if (geometry != spec.geometry) throw std::invalid_argument("grid geometry does not match the model");
  if (geometry == Geometry::Torus && std::abs(length() - spec.period) > 1e-12 * spec.period)
    throw std::invalid_argument("grid length does not match the torus period");
  if (!(length() > 0.0)) throw std::invalid_argument("grid: empty box");
  if (!(dt_pde > 0.0)) throw std::invalid_argument("grid: dt_pde must be positive");
  if (spec.dynamics == Dynamics::Langevin) {
    if (!kinetic()) throw std::invalid_argument("grid: Langevin model needs a velocity grid");
    if (!pow2(G_v)) throw std::invalid_argument("grid: G_v must be a power of two >= 8");
    if (v_max < 6.0 / std::sqrt(spec.beta)) throw std::invalid_argument("grid: v_max must be >= 6/sqrt(beta)");
  } else if (kinetic()) {
    throw std::invalid_argument("grid: overdamped model takes no velocity grid");
  }
}

double line_box_halfwidth(double sigma) {
  // Tail mass drops below 1e-12 at 7.13 sigma. The line solver's one-sided boundary stencils
  // also need the density itself negligible at the ends, which 10 sigma gives (about 1e-22).
  return 10.0 * sigma;
}

Eigen::VectorXd GridDensity::marginal() const {
  if (!grid.kinetic()) return values;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> F(
      values.data(), grid.G, grid.G_v);
  return F.rowwise().sum() * grid.dv();
}

void GridDensity::check(double tol) const {
  if (values.size() != grid.size()) throw std::runtime_error("density: size does not match grid");
  if (!values.allFinite()) throw std::runtime_error("density: non-finite values");
  const double m = mass();
  if (is_signed) {
    if (std::abs(m) > tol) throw std::runtime_error("signed perturbation has nonzero mass " + std::to_string(m));
  } else {
    if (std::abs(m - 1.0) > tol) throw std::runtime_error("density mass " + std::to_string(m) + " != 1");
    if (values.minCoeff() < -tol) throw std::runtime_error("density has negative values");
  }
}

double integrate(const GridSpec& grid, const Eigen::VectorXd& f) { return f.sum() * grid.cell(); }

GridMeasure::GridMeasure(Eigen::VectorXd x, Eigen::VectorXd rho, double dx)
    : x_(std::move(x)), rho_(std::move(rho)), dx_(dx) {}

double GridMeasure::grad_conv(double x, const PotentialSpec& w) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < x_.size(); ++j) s += w.dW(x - x_(j)) * rho_(j);
  return s * dx_;
}

// ---- Gibbs state ----

namespace {

Eigen::MatrixXd conv_matrix(const ModelSpec& spec, const GridSpec& grid) {
  const Eigen::VectorXd x = grid.x_nodes();
  const int G = grid.G;
  Eigen::MatrixXd K(G, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) K(i, j) = spec.interaction.W(x(i) - x(j)) * grid.dx();
  return K;
}

// Normalized exp(-beta (A + kappa K rho)) on the x grid.
Eigen::VectorXd gibbs_map(const ModelSpec& spec, const GridSpec& grid, const Eigen::VectorXd& Avals,
                          const Eigen::MatrixXd& K, const Eigen::VectorXd& rho) {
  Eigen::VectorXd e = -spec.beta * (Avals + spec.kappa * (K * rho));
  e.array() -= e.maxCoeff();
  Eigen::VectorXd out = e.array().exp();
  return out / (out.sum() * grid.dx());
}

Eigen::VectorXd velocity_factor(const ModelSpec& spec, const GridSpec& grid) {
  Eigen::VectorXd v = grid.v_nodes();
  Eigen::VectorXd g = (-0.5 * spec.beta * v.array().square()).exp();
  return g / (g.sum() * grid.dv());
}

GridDensity assemble(const GridSpec& grid, const Eigen::VectorXd& rho, const Eigen::VectorXd& gv) {
  GridDensity d;
  d.grid = grid;
  if (!grid.kinetic()) {
    d.values = rho;
    return d;
  }
  d.values.resize(grid.size());
  for (int i = 0; i < grid.G; ++i)
    for (int j = 0; j < grid.G_v; ++j) d.values(i * grid.G_v + j) = rho(i) * gv(j);
  return d;
}

}  // namespace

double gibbs_residual(const ModelSpec& spec, const GridDensity& m) {
  const GridSpec& grid = m.grid;
  const Eigen::VectorXd x = grid.x_nodes();
  Eigen::VectorXd Avals = x.unaryExpr([&](double y) { return spec.A(y); });
  const Eigen::MatrixXd K = conv_matrix(spec, grid);
  const Eigen::VectorXd rho = m.marginal();
  Eigen::VectorXd target = gibbs_map(spec, grid, Avals, K, rho);
  GridDensity t = assemble(grid, target, grid.kinetic() ? velocity_factor(spec, grid) : Eigen::VectorXd());
  return (m.values - t.values).cwiseAbs().maxCoeff();
}

GridDensity gibbs_steady_state(const ModelSpec& spec, const GridSpec& grid, double tol, int max_iter) {
  spec.validate();
  grid.validate(spec);
  if (!spec.gibbs_contractive()) {
    std::ostringstream os;
    os << "gibbs_steady_state: kappa*beta*sup|W| = " << spec.kappa * spec.beta * spec.interaction.sup_abs()
       << " >= 1, fixed point not guaranteed unique";
    throw std::invalid_argument(os.str());
  }
  const Eigen::VectorXd x = grid.x_nodes();
  Eigen::VectorXd Avals = x.unaryExpr([&](double y) { return spec.A(y); });
  const Eigen::MatrixXd K = conv_matrix(spec, grid);
  const Eigen::VectorXd gv = grid.kinetic() ? velocity_factor(spec, grid) : Eigen::VectorXd();
  const double vmass = grid.kinetic() ? gv.maxCoeff() : 1.0;

  Eigen::VectorXd rho = gibbs_map(spec, grid, Avals, K, Eigen::VectorXd::Zero(grid.G));
  double theta = 1.0;
  double last = INFINITY;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd t = gibbs_map(spec, grid, Avals, K, rho);
    const double res = (rho - t).cwiseAbs().maxCoeff() * vmass;
    if (res <= tol) {
      GridDensity d = assemble(grid, rho, gv);
      return d;
    }
    if (res > last) theta = std::max(0.05, 0.5 * theta);
    last = res;
    rho = (1.0 - theta) * rho + theta * t;
  }
  std::ostringstream os;
  os << "gibbs_steady_state: no convergence after " << max_iter << " iterations, residual " << last;
  throw std::runtime_error(os.str());
}

}  // namespace chaoslab

#include "chaoslab/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace chaoslab {

namespace {

constexpr double kPi = std::numbers::pi;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// Fornberg's recursion: weights for derivatives 0..M at z from arbitrary nodes.
Eigen::MatrixXd fornberg(double z, const std::vector<double>& x, int M) {
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, M + 1);
  double c1 = 1.0, c4 = x[0] - z;
  c(0, 0) = 1.0;
  for (int i = 1; i < n; ++i) {
    const int mn = std::min(i, M);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - z;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c(i, k) = c1 * (k * c(i - 1, k - 1) - c5 * c(i - 1, k)) / c2;
        c(i, 0) = -c1 * c5 * c(i - 1, 0) / c2;
      }
      for (int k = mn; k >= 1; --k) c(j, k) = (c4 * c(j, k) - k * c(j, k - 1)) / c3;
      c(j, 0) = c4 * c(j, 0) / c3;
    }
    c1 = c2;
  }
  return c;
}

void require_zero_mass(const GridSpec& grid, const Eigen::VectorXd& h, double tol, const char* who) {
  const double m = integrate(grid, h);
  if (std::abs(m) > tol) {
    std::ostringstream os;
    os << who << ": input must have zero mass (got " << m << ")";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

Eigen::MatrixXd spectral_derivative(int G, double L, int order) {
  if (G % 2 != 0) throw std::invalid_argument("spectral_derivative: G must be even");
  const double h = 2 * kPi / G, k0 = 2 * kPi / L;
  Eigen::MatrixXd D(G, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      const int d = i - j;
      const double sgn = (d % 2 == 0) ? 1.0 : -1.0;
      if (order == 1) {
        D(i, j) = d == 0 ? 0.0 : 0.5 * sgn / std::tan(d * h / 2) * k0;
      } else {
        const double s = std::sin(d * h / 2);
        D(i, j) = (d == 0 ? -kPi * kPi / (3 * h * h) - 1.0 / 6 : -0.5 * sgn / (s * s)) * k0 * k0;
      }
    }
  return D;
}

Eigen::MatrixXd fd_derivative(int G, double h, int order) {
  constexpr int width = 9;
  if (G < width) throw std::invalid_argument("fd_derivative: need at least 9 points");
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(G, G);
  std::vector<double> nodes(width);
  for (int i = 0; i < G; ++i) {
    const int start = std::clamp(i - width / 2, 0, G - width);
    for (int k = 0; k < width; ++k) nodes[k] = start + k - i;
    const Eigen::MatrixXd c = fornberg(0.0, nodes, order);
    for (int k = 0; k < width; ++k) D(i, start + k) = c(k, order) / std::pow(h, order);
  }
  return D;
}

MeanFieldOperator::MeanFieldOperator(const ModelSpec& spec, const GridSpec& grid) : spec_(spec), grid_(grid) {
  spec_.validate();
  grid_.validate(spec_);
  if (spec_.dynamics == Dynamics::Langevin && !grid_.kinetic())
    throw std::invalid_argument("meanfield: Langevin dynamics needs a kinetic grid");
  if (spec_.dynamics == Dynamics::Overdamped && grid_.kinetic())
    throw std::invalid_argument("meanfield: Overdamped dynamics needs a spatial grid");
  const int G = grid_.G;
  if (grid_.geometry == Geometry::Torus) {
    d1_ = spectral_derivative(G, grid_.length(), 1);
    d2_ = spectral_derivative(G, grid_.length(), 2);
  } else {
    d1_ = fd_derivative(G, grid_.dx(), 1);
    d2_ = fd_derivative(G, grid_.dx(), 2);
  }
  df1_ = -d1_.transpose();
  df2_ = d2_.transpose();
  const Eigen::VectorXd x = grid_.x_nodes();
  dA_ = x.unaryExpr([&](double y) { return spec_.dA(y); });
  kp_.resize(G, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) kp_(i, j) = spec_.interaction.dW(x(i) - x(j)) * grid_.dx();
  if (grid_.kinetic()) {
    dv_ = fd_derivative(grid_.G_v, grid_.dv(), 1);
    dv2_ = fd_derivative(grid_.G_v, grid_.dv(), 2);
    v_ = grid_.v_nodes();
  }
}

Eigen::VectorXd MeanFieldOperator::marginal(const Eigen::VectorXd& mu) const {
  if (!kinetic()) return mu;
  return MapC(mu.data(), grid_.G, grid_.G_v).rowwise().sum() * grid_.dv();
}

Eigen::VectorXd MeanFieldOperator::mean_force(const Eigen::VectorXd& rho) const {
  if (spec_.kappa == 0.0) return Eigen::VectorXd::Zero(grid_.G);
  return spec_.kappa * (kp_ * rho);
}

Eigen::VectorXd MeanFieldOperator::rhs(const Eigen::VectorXd& mu) const {
  const Eigen::VectorXd c = dA_ + mean_force(marginal(mu));
  if (!kinetic()) return 0.5 * (df2_ * mu) + df1_ * c.cwiseProduct(mu);
  const MapC M(mu.data(), grid_.G, grid_.G_v);
  Eigen::VectorXd out(mu.size());
  Map O(out.data(), grid_.G, grid_.G_v);
  const RowMat Mv = M * v_.asDiagonal();
  O = d1_.transpose() * Mv - (c.asDiagonal() * M) * dv_ - (0.5 * spec_.beta) * (Mv * dv_) + 0.5 * (M * dv2_);
  return out;
}

Eigen::VectorXd MeanFieldOperator::apply(const Eigen::VectorXd& mu, const Eigen::VectorXd& h) const {
  const Eigen::VectorXd c = dA_ + mean_force(marginal(mu));
  const Eigen::VectorXd dc = mean_force(marginal(h));
  if (!kinetic()) return 0.5 * (df2_ * h) + df1_ * (c.cwiseProduct(h) + dc.cwiseProduct(mu));
  const MapC H(h.data(), grid_.G, grid_.G_v), M(mu.data(), grid_.G, grid_.G_v);
  Eigen::VectorXd out(h.size());
  Map O(out.data(), grid_.G, grid_.G_v);
  const RowMat Hv = H * v_.asDiagonal();
  O = d1_.transpose() * Hv - (c.asDiagonal() * H + dc.asDiagonal() * M) * dv_ - (0.5 * spec_.beta) * (Hv * dv_) +
      0.5 * (H * dv2_);
  return out;
}

Eigen::VectorXd MeanFieldOperator::apply_adjoint(const Eigen::VectorXd& mu, const Eigen::VectorXd& g) const {
  const Eigen::VectorXd c = dA_ + mean_force(marginal(mu));
  if (!kinetic()) {
    const Eigen::VectorXd dg = d1_ * g;
    Eigen::VectorXd out = 0.5 * (d2_ * g) - c.cwiseProduct(dg);
    if (spec_.kappa != 0.0) out -= spec_.kappa * (kp_.transpose() * mu.cwiseProduct(dg));
    return out;
  }
  const MapC Gm(g.data(), grid_.G, grid_.G_v), M(mu.data(), grid_.G, grid_.G_v);
  Eigen::VectorXd out(g.size());
  Map O(out.data(), grid_.G, grid_.G_v);
  const RowMat gv = Gm * dv_.transpose();
  O = (d1_ * Gm) * v_.asDiagonal() - c.asDiagonal() * gv - (0.5 * spec_.beta) * (gv * v_.asDiagonal()) +
      0.5 * (Gm * dv2_.transpose());
  if (spec_.kappa != 0.0) {
    const Eigen::VectorXd s = (M * dv_).cwiseProduct(Gm).rowwise().sum();
    const Eigen::VectorXd back = spec_.kappa * grid_.dv() * (kp_.transpose() * s);
    O.colwise() -= back;
  }
  return out;
}

Eigen::VectorXd MeanFieldOperator::second(const Eigen::VectorXd& h, const Eigen::VectorXd& k) const {
  if (spec_.kappa == 0.0) return Eigen::VectorXd::Zero(h.size());
  const Eigen::VectorXd ch = mean_force(marginal(h)), ck = mean_force(marginal(k));
  if (!kinetic()) return df1_ * (h.cwiseProduct(ck) + k.cwiseProduct(ch));
  const MapC Hm(h.data(), grid_.G, grid_.G_v), Km(k.data(), grid_.G, grid_.G_v);
  Eigen::VectorXd out(h.size());
  Map O(out.data(), grid_.G, grid_.G_v);
  O = -(ck.asDiagonal() * Hm + ch.asDiagonal() * Km) * dv_;
  return out;
}

Eigen::VectorXd MeanFieldOperator::noise_grad(const Eigen::VectorXd& g) const {
  if (!kinetic()) return d1_ * g;
  Eigen::VectorXd out(g.size());
  Map(out.data(), grid_.G, grid_.G_v) = MapC(g.data(), grid_.G, grid_.G_v) * dv_.transpose();
  return out;
}

Eigen::MatrixXd MeanFieldOperator::linear_matrix(const Eigen::VectorXd& mu) const {
  if (kinetic()) throw std::invalid_argument("linear_matrix: kinetic grids are not supported");
  const Eigen::VectorXd c = dA_ + mean_force(mu);
  Eigen::MatrixXd J = 0.5 * df2_ + df1_ * c.asDiagonal();
  if (spec_.kappa != 0.0) J.noalias() += spec_.kappa * (df1_ * mu.asDiagonal()) * kp_;
  return J;
}

double MeanFieldOperator::spectral_radius(const Eigen::VectorXd& mu) const {
  // Gelfand: ||J^k x||^(1/k) -> rho(J); renormalize each step and average the log growth.
  Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(size(), [](Eigen::Index i) { return std::sin(1.0 + 0.7 * i * i); });
  x /= x.norm();
  constexpr int warm = 20, iters = 60;
  double logsum = 0.0;
  for (int k = 0; k < warm + iters; ++k) {
    Eigen::VectorXd y = apply(mu, x);
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    if (k >= warm) logsum += std::log(n);
    x = y / n;
  }
  return std::exp(logsum / iters);
}

double MeanFieldOperator::stable_dt(const Eigen::VectorXd& mu) const {
  // RK4 reaches 2.78 on the negative real axis; keep a 20% margin.
  return 0.8 * 2.78 / spectral_radius(mu);
}

MeanFieldPath::MeanFieldPath(std::shared_ptr<const MeanFieldOperator> op, const Eigen::VectorXd& mu0, double T)
    : op_(std::move(op)), dt_(op_->grid().dt_pde) {
  if (!(dt_ > 0.0)) throw std::invalid_argument("meanfield: dt_pde must be positive");
  if (T < 0.0) throw std::invalid_argument("meanfield: negative horizon");
  const double dt_max = op_->stable_dt(mu0);
  if (dt_ > dt_max) {
    std::ostringstream os;
    os << "meanfield: dt_pde = " << dt_ << " violates the stability limit; use dt_pde <= " << dt_max;
    throw CflError(os.str(), dt_max);
  }
  const int n = static_cast<int>(std::llround(T / dt_));
  if (std::abs(n * dt_ - T) > 1e-9 * std::max(1.0, T))
    throw std::invalid_argument("meanfield: T must be a multiple of dt_pde");
  states_.reserve(n + 1);
  states_.push_back(mu0);
  const double floor = -1e-10 * std::max(1.0, mu0.cwiseAbs().maxCoeff());
  for (int s = 0; s < n; ++s) {
    const Eigen::VectorXd& y = states_.back();
    const Eigen::VectorXd k1 = op_->rhs(y);
    const Eigen::VectorXd k2 = op_->rhs(y + 0.5 * dt_ * k1);
    const Eigen::VectorXd k3 = op_->rhs(y + 0.5 * dt_ * k2);
    const Eigen::VectorXd k4 = op_->rhs(y + dt_ * k3);
    Eigen::VectorXd next = y + dt_ / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!next.allFinite()) throw std::runtime_error("meanfield: non-finite density");
    if (next.minCoeff() < floor) {
      std::ostringstream os;
      os << "meanfield: negative density " << next.minCoeff() << " at t = " << (s + 1) * dt_;
      throw std::runtime_error(os.str());
    }
    states_.push_back(std::move(next));
  }
}

int MeanFieldPath::index(double t) const {
  const int n = static_cast<int>(std::llround(t / dt_));
  if (n < 0 || n > steps() || std::abs(n * dt_ - t) > 1e-9 * std::max(1.0, t))
    throw std::invalid_argument("meanfield: time is not on the step grid of the path");
  return n;
}

GridDensity MeanFieldPath::density(int n) const { return {states_.at(n), op_->grid(), false}; }

void MeanFieldPath::stages(int n, Eigen::VectorXd y[4]) const {
  const Eigen::VectorXd& mu = states_.at(n);
  y[0] = mu;
  const Eigen::VectorXd k1 = op_->rhs(y[0]);
  y[1] = mu + 0.5 * dt_ * k1;
  const Eigen::VectorXd k2 = op_->rhs(y[1]);
  y[2] = mu + 0.5 * dt_ * k2;
  const Eigen::VectorXd k3 = op_->rhs(y[2]);
  y[3] = mu + dt_ * k3;
}

Eigen::VectorXd MeanFieldPath::tangent_step(int n, const Eigen::VectorXd& h) const {
  Eigen::VectorXd y[4];
  stages(n, y);
  const Eigen::VectorXd k1 = op_->apply(y[0], h);
  const Eigen::VectorXd k2 = op_->apply(y[1], h + 0.5 * dt_ * k1);
  const Eigen::VectorXd k3 = op_->apply(y[2], h + 0.5 * dt_ * k2);
  const Eigen::VectorXd k4 = op_->apply(y[3], h + dt_ * k3);
  return h + dt_ / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

Eigen::VectorXd MeanFieldPath::adjoint_step(int n, const Eigen::VectorXd& g) const {
  Eigen::VectorXd y[4];
  stages(n, y);
  const Eigen::VectorXd u4 = op_->apply_adjoint(y[3], dt_ / 6 * g);
  const Eigen::VectorXd u3 = op_->apply_adjoint(y[2], dt_ / 3 * g + dt_ * u4);
  const Eigen::VectorXd u2 = op_->apply_adjoint(y[1], dt_ / 3 * g + 0.5 * dt_ * u3);
  const Eigen::VectorXd u1 = op_->apply_adjoint(y[0], dt_ / 6 * g + 0.5 * dt_ * u2);
  return g + u1 + u2 + u3 + u4;
}

Eigen::MatrixXd MeanFieldPath::tangent_matrix(int n) const {
  Eigen::VectorXd y[4];
  stages(n, y);
  const int G = op_->size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(G, G);
  const Eigen::MatrixXd K1 = op_->linear_matrix(y[0]);
  const Eigen::MatrixXd K2 = op_->linear_matrix(y[1]) * (I + 0.5 * dt_ * K1);
  const Eigen::MatrixXd K3 = op_->linear_matrix(y[2]) * (I + 0.5 * dt_ * K2);
  const Eigen::MatrixXd K4 = op_->linear_matrix(y[3]) * (I + dt_ * K3);
  return I + dt_ / 6 * (K1 + 2 * K2 + 2 * K3 + K4);
}

void MeanFieldPath::second_step(int n, Eigen::VectorXd& h1, Eigen::VectorXd& h2, Eigen::VectorXd& hh) const {
  Eigen::VectorXd y[4];
  stages(n, y);
  const double c[4] = {0.0, 0.5 * dt_, 0.5 * dt_, dt_};
  const double b[4] = {dt_ / 6, dt_ / 3, dt_ / 3, dt_ / 6};
  Eigen::VectorXd a1 = h1, a2 = h2, aa = hh;  // stage directions
  Eigen::VectorXd n1 = h1, n2 = h2, nn = hh;
  Eigen::VectorXd k1, k2, kk;
  for (int i = 0; i < 4; ++i) {
    if (i > 0) {
      a1 = h1 + c[i] * k1;
      a2 = h2 + c[i] * k2;
      aa = hh + c[i] * kk;
    }
    kk = op_->apply(y[i], aa) + op_->second(a1, a2);
    k1 = op_->apply(y[i], a1);
    k2 = op_->apply(y[i], a2);
    n1 += b[i] * k1;
    n2 += b[i] * k2;
    nn += b[i] * kk;
  }
  h1 = std::move(n1);
  h2 = std::move(n2);
  hh = std::move(nn);
}

MeanFieldPath solve_path(const GridDensity& mu0, const ModelSpec& spec, double T) {
  mu0.check();
  auto op = std::make_shared<const MeanFieldOperator>(spec, mu0.grid);
  return MeanFieldPath(op, mu0.values, T);
}

std::vector<GridDensity> mckean_vlasov_solve(const GridDensity& mu0, const ModelSpec& spec, const GridSpec& grid,
                                             double T, const std::vector<double>& record_times) {
  GridDensity start = mu0;
  start.grid = grid;
  if (start.values.size() != grid.size()) throw std::invalid_argument("mckean_vlasov_solve: grid size mismatch");
  const MeanFieldPath path = solve_path(start, spec, T);
  std::vector<GridDensity> out;
  for (double t : record_times) {
    const int n = static_cast<int>(std::llround(t / path.dt()));
    if (n < 0 || n > path.steps()) throw std::invalid_argument("mckean_vlasov_solve: record time outside [0, T]");
    out.push_back(path.density(n));
  }
  return out;
}

GridDensity linearized_apply(const GridDensity& h, const GridDensity& mu, const ModelSpec& spec) {
  require_zero_mass(h.grid, h.values, 1e-10, "linearized_apply");
  const MeanFieldOperator op(spec, mu.grid);
  return {op.apply(mu.values, h.values), mu.grid, true};
}

GridDensity linearized_flow(const GridDensity& f, const MeanFieldPath& path, double s, double t) {
  require_zero_mass(f.grid, f.values, 1e-10, "linearized_flow");
  const int a = path.index(s), b = path.index(t);
  if (a > b) throw std::invalid_argument("linearized_flow: need s <= t");
  Eigen::VectorXd h = f.values;
  for (int n = a; n < b; ++n) h = path.tangent_step(n, h);
  return {h, path.op().grid(), true};
}

Eigen::VectorXd dual_flow(const Eigen::VectorXd& g, const MeanFieldPath& path, double t, double s) {
  const int a = path.index(s), b = path.index(t);
  if (a > b) throw std::invalid_argument("dual_flow: need s <= t");
  Eigen::VectorXd psi = g;
  for (int n = b - 1; n >= a; --n) psi = path.adjoint_step(n, psi);
  return psi;
}

std::vector<Eigen::VectorXd> dual_series(const Eigen::VectorXd& g, const MeanFieldPath& path, double t) {
  const int b = path.index(t);
  std::vector<Eigen::VectorXd> out(b + 1);
  out[b] = g;
  for (int n = b - 1; n >= 0; --n) out[n] = path.adjoint_step(n, out[n + 1]);
  return out;
}

Eigen::VectorXd mollified_dirac(const GridSpec& grid, int node, double width) {
  if (grid.kinetic()) throw std::invalid_argument("mollified_dirac: spatial grids only");
  if (node < 0 || node >= grid.G) throw std::invalid_argument("mollified_dirac: anchor off grid");
  if (!(width > 0.0)) throw std::invalid_argument("mollified_dirac: width must be positive");
  const int G = grid.G;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(G);
  if (grid.geometry == Geometry::Torus) {
    // Fejer multiplier (1 - |n| w / G)_+ centred at the node
    const double L = grid.length();
    for (int i = 0; i < G; ++i) {
      double s = 1.0;
      for (int n = 1; n * width < G; ++n) s += 2 * (1 - n * width / G) * std::cos(2 * kPi * n * (i - node) / G);
      d(i) = s / L;
    }
  } else {
    for (int i = 0; i < G; ++i) d(i) = std::max(0.0, 1.0 - std::abs(i - node) / width);
    d /= d.sum() * grid.dx();
  }
  return d;
}

LinearDerivativeField mk_flow1(const MeanFieldPath& path, const std::vector<int>& anchors,
                               const std::vector<double>& times, double width) {
  const GridSpec& grid = path.op().grid();
  LinearDerivativeField f;
  f.anchors = anchors;
  f.times = times;
  f.width = width;
  std::vector<int> idx;
  for (double t : times) idx.push_back(path.index(t));
  if (!std::is_sorted(idx.begin(), idx.end())) throw std::invalid_argument("mk_flow: times must be sorted");
  const Eigen::VectorXd& mu = path.state(0);
  for (int y : anchors) {
    Eigen::VectorXd h = mollified_dirac(grid, y, width) - mu;
    std::vector<Eigen::VectorXd> slices;
    int n = 0;
    for (int target : idx) {
      for (; n < target; ++n) h = path.tangent_step(n, h);
      slices.push_back(h);
    }
    f.m1.push_back(std::move(slices));
  }
  return f;
}

void mk_flow2(const MeanFieldPath& path, LinearDerivativeField& field, const std::vector<std::pair<int, int>>& pairs) {
  const GridSpec& grid = path.op().grid();
  const Eigen::VectorXd& mu = path.state(0);
  std::vector<int> idx;
  for (double t : field.times) idx.push_back(path.index(t));
  for (auto [a, b] : pairs) {
    if (a < 0 || b < 0 || a >= static_cast<int>(field.anchors.size()) || b >= static_cast<int>(field.m1.size()))
      throw std::invalid_argument("mk_flow2: missing first-order field for anchor pair");
    Eigen::VectorXd h1 = mollified_dirac(grid, field.anchors[a], field.width) - mu;
    Eigen::VectorXd h2 = mollified_dirac(grid, field.anchors[b], field.width) - mu;
    Eigen::VectorXd hh = Eigen::VectorXd::Zero(mu.size());
    std::vector<Eigen::VectorXd> slices;
    int n = 0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (; n < idx[r]; ++n) path.second_step(n, h1, h2, hh);
      // d/d eps of m^(1)(t, mu + eps (delta_b - mu), y_a) picks up -m^(1)(t, mu, y_b)
      slices.push_back(hh - field.m1[b][r]);
    }
    field.pairs.emplace_back(a, b);
    field.m2.push_back(std::move(slices));
  }
}

double negative_sobolev_norm(const GridSpec& grid, const Eigen::VectorXd& f, int k) {
  if (grid.geometry != Geometry::Torus) throw std::invalid_argument("negative_sobolev_norm: torus only");
  const int G = grid.G, rows = grid.kinetic() ? grid.G_v : 1;
  const double k0 = 2 * kPi / grid.length();
  Eigen::FFT<double> fft;
  std::vector<double> col(G);
  std::vector<std::complex<double>> spec;
  double total = 0.0;
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < G; ++i) col[i] = f(grid.kinetic() ? i * grid.G_v + j : i);
    fft.fwd(spec, col);
    double s = 0.0;
    for (int n = 0; n < G; ++n) {
      const int m = n <= G / 2 ? n : n - G;
      // coefficient of e^{i m k0 x} in f is spec[n] / G; integral scale L / G
      const double c = std::abs(spec[n]) * grid.dx();
      s += c * c * std::pow(1.0 + k0 * k0 * m * m, -k);
    }
    total += s * (grid.kinetic() ? grid.dv() : 1.0);
  }
  return std::sqrt(total / grid.length());
}

double hermite_norm(const GridSpec& grid, const Eigen::VectorXd& f, double sigma) {
  if (grid.kinetic()) throw std::invalid_argument("hermite_norm: spatial grids only");
  const Eigen::VectorXd x = grid.x_nodes() / sigma;
  const int G = grid.G;
  // orthonormal Hermite functions by the stable three-term recursion
  Eigen::VectorXd hm1 = Eigen::VectorXd::Zero(G);
  Eigen::VectorXd h = (-0.5 * x.array().square()).exp() / std::pow(kPi, 0.25);
  double best = 0.0;
  for (int j = 0; j < 16; ++j) {
    const double sup = h.cwiseAbs().maxCoeff();
    if (sup > 0.0) best = std::max(best, std::abs(f.dot(h)) * grid.dx() / sup);
    const Eigen::VectorXd next =
        (std::sqrt(2.0 / (j + 1)) * x.array() * h.array() - std::sqrt(static_cast<double>(j) / (j + 1)) * hm1.array())
            .matrix();
    hm1 = h;
    h = next;
  }
  return best;
}

DecayFit decay_rate(const GridDensity& f0, const MeanFieldPath& path, int samples, int sobolev_k,
                    double hermite_sigma) {
  require_zero_mass(f0.grid, f0.values, 1e-10, "decay_rate");
  if (samples < 4) throw std::invalid_argument("decay_rate: need at least 4 samples");
  const GridSpec& grid = path.op().grid();
  auto norm = [&](const Eigen::VectorXd& f) {
    if (grid.geometry == Geometry::Torus) return negative_sobolev_norm(grid, f, sobolev_k);
    if (grid.kinetic()) {
      const Eigen::VectorXd rho = path.op().marginal(f);
      GridSpec g = grid;
      g.G_v = 0;
      return hermite_norm(g, rho, hermite_sigma);
    }
    return hermite_norm(grid, f, hermite_sigma);
  };
  DecayFit fit;
  const int total = path.steps();
  Eigen::VectorXd h = f0.values;
  const double n0 = norm(h);
  if (n0 == 0.0) throw std::invalid_argument("decay_rate: zero initial perturbation");
  int next = 0;
  for (int n = 0; n <= total; ++n) {
    if (n == next * total / samples) {
      fit.times.push_back(n * path.dt());
      fit.norms.push_back(norm(h));
      if (fit.norms.back() > 10 * n0) fit.unstable = true;
      ++next;
    }
    if (n < total) h = path.tangent_step(n, h);
  }
  // least squares of log norm on t over the tail window [T/2, T]
  const double T = path.T();
  std::vector<double> tt, yy;
  for (std::size_t i = 0; i < fit.times.size(); ++i)
    if (fit.times[i] >= 0.5 * T - 1e-12 && fit.norms[i] > 0.0) {
      tt.push_back(fit.times[i]);
      yy.push_back(std::log(fit.norms[i]));
    }
  const int m = static_cast<int>(tt.size());
  if (m < 3) throw std::runtime_error("decay_rate: too few samples in the fit window");
  double tm = 0.0, ym = 0.0;
  for (int i = 0; i < m; ++i) {
    tm += tt[i] / m;
    ym += yy[i] / m;
  }
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < m; ++i) {
    sxx += (tt[i] - tm) * (tt[i] - tm);
    sxy += (tt[i] - tm) * (yy[i] - ym);
  }
  const double slope = sxy / sxx;
  double rss = 0.0;
  for (int i = 0; i < m; ++i) {
    const double r = yy[i] - ym - slope * (tt[i] - tm);
    rss += r * r;
  }
  fit.rate = -slope;
  fit.ci = 1.96 * std::sqrt(rss / (m - 2) / sxx);
  return fit;
}

}  // namespace chaoslab

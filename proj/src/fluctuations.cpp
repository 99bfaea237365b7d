#include "chaoslab/fluctuations.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <set>

namespace chaoslab {

namespace {

constexpr double kPi = std::numbers::pi;

double pair(const GridSpec& grid, const Eigen::VectorXd& f, const Eigen::VectorXd& g) { return f.dot(g) * grid.cell(); }

// Smoothing matrix whose column j is the mollified Dirac at node j (times dx).
Eigen::MatrixXd mollifier_matrix(const GridSpec& grid, double width) {
  Eigen::MatrixXd S(grid.G, grid.G);
  for (int j = 0; j < grid.G; ++j) S.col(j) = mollified_dirac(grid, j, width) * grid.dx();
  return S;
}

double block_jackknife_se(const std::vector<const Eigen::VectorXd*>& cols, int blocks) {
  const Eigen::Index R = cols[0]->size();
  blocks = static_cast<int>(std::min<Eigen::Index>(blocks, R / 8));
  if (blocks < 2) return 0.0;
  std::vector<double> est(blocks);
  for (int b = 0; b < blocks; ++b) {
    const Eigen::Index lo = R * b / blocks, hi = R * (b + 1) / blocks;
    std::vector<Eigen::VectorXd> kept;
    for (const auto* c : cols) {
      Eigen::VectorXd k(R - (hi - lo));
      k << c->head(lo), c->tail(R - hi);
      kept.push_back(std::move(k));
    }
    std::vector<const Eigen::VectorXd*> ptrs;
    for (const auto& k : kept) ptrs.push_back(&k);
    est[b] = unbiased_joint_cumulant(ptrs);
  }
  double mean = 0.0;
  for (double e : est) mean += e / blocks;
  double ss = 0.0;
  for (double e : est) ss += (e - mean) * (e - mean);
  return std::sqrt((blocks - 1.0) / blocks * ss);
}

// Solves the cumulant/pairing identity for the pairing of `key` (linear in it), with linear
// error propagation from the cumulant estimate and the lower pairings.
Estimate solve_pairing(const PowerKey& key, const Estimate& kappa, PairingTable table, int N) {
  table[key] = Estimate{0.0, 0.0};
  const double rest = cumulant_from_pairings(key, table, N);
  table[key] = Estimate{1.0, 0.0};
  const double coeff = cumulant_from_pairings(key, table, N) - rest;
  table[key] = Estimate{0.0, 0.0};
  double var = kappa.stderr * kappa.stderr;
  for (auto& [k, est] : table) {
    if (k == key || est.stderr == 0.0) continue;
    const double v0 = est.value, h = 1e-4 * std::max(std::abs(v0), 1e-8);
    est.value = v0 + h;
    const double up = cumulant_from_pairings(key, table, N);
    est.value = v0 - h;
    const double dn = cumulant_from_pairings(key, table, N);
    est.value = v0;
    const double g = (up - dn) / (2 * h);
    var += g * g * est.stderr * est.stderr;
  }
  return {(kappa.value - rest) / coeff, std::sqrt(var) / std::abs(coeff)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---- statistics ----

SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& value,
                          const std::vector<double>& stderr, const std::vector<int>& group, double min_snr) {
  std::map<int, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::abs(value[i]) > min_snr * stderr[i] && value[i] != 0.0) by_group[group[i]].push_back(i);
  std::vector<std::size_t> keep;
  std::vector<int> gidx;
  int ng = 0;
  for (auto& [g, idx] : by_group) {
    std::set<double> xs;
    for (auto i : idx) xs.insert(x[i]);
    if (xs.size() < 2) continue;
    for (auto i : idx) {
      keep.push_back(i);
      gidx.push_back(ng);
    }
    ++ng;
  }
  SlopeFit fit;
  fit.used = static_cast<int>(keep.size());
  const int p = ng + 1;
  if (fit.used < 2 || ng == 0) return fit;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(fit.used, p);
  Eigen::VectorXd y(fit.used), w(fit.used);
  for (int k = 0; k < fit.used; ++k) {
    const std::size_t i = keep[k];
    A(k, 0) = std::log(x[i]);
    A(k, 1 + gidx[k]) = 1.0;
    y(k) = std::log(std::abs(value[i]));
    const double sl = stderr[i] / std::abs(value[i]);
    w(k) = sl > 0.0 ? 1.0 / (sl * sl) : 1e12;
  }
  const Eigen::MatrixXd AtW = A.transpose() * w.asDiagonal();
  const Eigen::MatrixXd cov = (AtW * A).inverse();
  const Eigen::VectorXd beta = cov * (AtW * y);
  fit.slope = beta(0);
  fit.stderr = std::sqrt(cov(0, 0));
  double inflate = 1.0;
  if (fit.used > p) {
    const Eigen::VectorXd r = y - A * beta;
    const double chi2 = r.cwiseProduct(r).dot(w) / (fit.used - p);
    inflate = std::max(1.0, std::sqrt(chi2));
  }
  fit.ci = 1.96 * fit.stderr * inflate;
  fit.conclusive = std::isfinite(fit.slope) && fit.used >= p;
  return fit;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double ks_distance(std::vector<double> s, double sigma) {
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = normal_cdf(s[i] / sigma);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

std::pair<double, double> ks_bootstrap(const std::vector<double>& samples, double sigma, int B, std::uint64_t seed) {
  const CounterRng rng(seed, 0);
  const std::size_t n = samples.size();
  std::vector<double> stats(B), re(n);
  for (int b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < n; ++i) re[i] = samples[std::min(n - 1, static_cast<std::size_t>(rng.uniform(b, i) * n))];
    stats[b] = ks_distance(re, sigma);
  }
  std::sort(stats.begin(), stats.end());
  return {stats[static_cast<std::size_t>(0.025 * (B - 1))], stats[static_cast<std::size_t>(0.975 * (B - 1))]};
}

Estimate sample_variance(const Eigen::VectorXd& x) {
  const CumulantTable k = k_statistics(x, 2);
  return {k.values[1], k.stderrs[1]};
}

// ---- CLT ----

Eigen::VectorXd sample_on_grid(const Observable& phi, const GridSpec& grid) {
  const Eigen::VectorXd x = grid.x_nodes();
  if (!grid.kinetic()) return x.unaryExpr([&](double y) { return phi.f(y, 0.0); });
  const Eigen::VectorXd v = grid.v_nodes();
  Eigen::VectorXd out(grid.size());
  for (int i = 0; i < grid.G; ++i)
    for (int j = 0; j < grid.G_v; ++j) out(i * grid.G_v + j) = phi.f(x(i), v(j));
  return out;
}

CltVariance clt_variance(const Eigen::VectorXd& phi, const MeanFieldPath& path, double t) {
  const GridSpec& grid = path.op().grid();
  const std::vector<Eigen::VectorXd> psi = dual_series(phi, path, t);
  const int nt = static_cast<int>(psi.size()) - 1;
  CltVariance out;
  const Eigen::VectorXd& mu0 = path.state(0);
  const double m = pair(grid, mu0, psi[0]);
  out.sigma_C2 = std::max(0.0, pair(grid, mu0, psi[0].cwiseAbs2()) - m * m);
  for (int n = 0; n <= nt; ++n) {
    const double w = (n == 0 || n == nt) ? 0.5 : 1.0;
    out.sigma_D2 += w * path.dt() * pair(grid, path.state(n), path.op().noise_grad(psi[n]).cwiseAbs2());
  }
  if (nt == 0) out.sigma_D2 = 0.0;
  out.sigma2 = out.sigma_C2 + out.sigma_D2;
  return out;
}

CltVariance clt_variance(const Observable& phi, const GridDensity& mu0, const ModelSpec& spec, double t) {
  const MeanFieldPath path = solve_path(mu0, spec, t);
  return clt_variance(sample_on_grid(phi, mu0.grid), path, t);
}

CltReport clt_report(const Eigen::VectorXd& values, int N, double t, double mean_field, const CltVariance& predicted,
                     std::uint64_t seed) {
  CltReport rep;
  rep.t = t;
  rep.N = N;
  rep.R = static_cast<int>(values.size());
  rep.mean_field = mean_field;
  rep.predicted = predicted;
  const Estimate v = sample_variance(values);
  rep.n_var = {N * v.value, N * v.stderr};
  std::vector<double> y(values.size());
  const double rt = std::sqrt(static_cast<double>(N));
  for (Eigen::Index i = 0; i < values.size(); ++i) y[i] = rt * (values(i) - mean_field);
  const double sigma = std::sqrt(predicted.sigma2);
  rep.ks = ks_distance(y, sigma);
  std::tie(rep.ks_lo, rep.ks_hi) = ks_bootstrap(y, sigma, 200, seed);
  const double mean = values.mean() * rt;
  std::vector<double> c(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) c[i] = y[i] - (mean - rt * mean_field);
  rep.ks_fitted = ks_distance(c, std::sqrt(rep.n_var.value));
  return rep;
}

CltReport clt_experiment(const Observable& phi, const ReplicaPlan& plan, const ModelSpec& spec, const GridSpec& pde,
                         double t) {
  ReplicaPlan p = plan;
  p.finalize();
  auto it = std::find_if(p.record_times.begin(), p.record_times.end(), [&](double r) { return std::abs(r - t) < 1e-9; });
  if (it == p.record_times.end()) throw std::invalid_argument("clt_experiment: t is not a record time");
  const int ti = static_cast<int>(it - p.record_times.begin());
  const ObservableSeries s = simulate_ensemble(p, spec, {phi});
  const GridDensity mu0 = p.initial_law.density(spec, pde);
  const MeanFieldPath path = solve_path(mu0, spec, t);
  const Eigen::VectorXd g = sample_on_grid(phi, pde);
  const double mf = pair(pde, path.state(path.index(t)), g);
  return clt_report(s.column(ti, 0), p.N, t, mf, clt_variance(g, path, t), p.master_seed ^ 0x6b73ULL);
}

// ---- weak error ----

WeakErrorPrediction weak_error_predict(const Eigen::VectorXd& phi, const MeanFieldPath& path, double t, double width) {
  const MeanFieldOperator& op = path.op();
  if (op.kinetic()) throw std::invalid_argument("weak_error_predict: Overdamped grids only");
  const GridSpec& grid = op.grid();
  const int G = grid.G;
  const double dx = grid.dx(), dt = path.dt(), kappa = op.spec().kappa;
  if (width / 2 < 1.0) throw std::invalid_argument("weak_error_predict: mollifier narrower than one cell");
  const int nt = path.index(t);
  const std::vector<Eigen::VectorXd> psi = dual_series(phi, path, t);

  const double widths[2] = {width, width / 2};
  Eigen::MatrixXd S[2];
  for (int k = 0; k < 2; ++k) S[k] = mollifier_matrix(grid, widths[k]);
  auto noise = [&](int n, int k) {
    const Eigen::VectorXd& mu = path.state(n);
    Eigen::MatrixXd Q = op.D1().transpose() * mu.asDiagonal() * op.D1() / dx;
    return Eigen::MatrixXd(S[k] * Q * S[k].transpose());
  };
  auto contract = [&](int n, const Eigen::MatrixXd& C) {
    if (kappa == 0.0) return 0.0;
    const Eigen::VectorXd dpsi = op.D1() * psi[n];
    const Eigen::VectorXd row = op.kernel().cwiseProduct(C).rowwise().sum();
    return -kappa * dx * dpsi.dot(row);
  };

  const Eigen::VectorXd& mu0 = path.state(0);
  const Eigen::MatrixXd C0 = Eigen::MatrixXd(mu0.asDiagonal()) / dx - mu0 * mu0.transpose();
  // [k][0] initial part, [k][1] noise part
  Eigen::MatrixXd C[2][2];
  Eigen::MatrixXd Qn[2];
  double val[2][2] = {{0, 0}, {0, 0}};
  for (int k = 0; k < 2; ++k) {
    C[k][0] = S[k] * C0 * S[k].transpose();
    C[k][1] = Eigen::MatrixXd::Zero(G, G);
    Qn[k] = noise(0, k);
  }
  for (int n = 0; n <= nt; ++n) {
    const double w = (n == 0 || n == nt) ? 0.5 * dt : dt;
    for (int k = 0; k < 2; ++k)
      for (int part = 0; part < 2; ++part) val[k][part] += w * contract(n, C[k][part]);
    if (n == nt) break;
    const Eigen::MatrixXd M = path.tangent_matrix(n);
    for (int k = 0; k < 2; ++k) {
      const Eigen::MatrixXd Qnext = noise(n + 1, k);
      C[k][0] = M * C[k][0] * M.transpose();
      C[k][1] = M * (C[k][1] + 0.5 * dt * Qn[k]) * M.transpose() + 0.5 * dt * Qnext;
      Qn[k] = Qnext;
    }
  }
  WeakErrorPrediction out;
  out.c1_coarse = val[0][0] + val[0][1];
  out.c1_fine = val[1][0] + val[1][1];
  out.c1_initial = 2 * val[1][0] - val[0][0];
  out.c1_ito = 2 * val[1][1] - val[0][1];
  out.c1 = out.c1_initial + out.c1_ito;
  out.uncertainty = 0.5 * std::abs(out.c1_fine - out.c1_coarse);
  return out;
}

double weak_error_initial_mk(const Eigen::VectorXd& phi, const MeanFieldPath& path, double t, double width) {
  const GridSpec& grid = path.op().grid();
  const int nt = path.index(t);
  const Eigen::VectorXd& mu = path.state(0);
  double acc = 0.0;
  for (int z = 0; z < grid.G; ++z) {
    Eigen::VectorXd h1 = mollified_dirac(grid, z, width) - mu;
    Eigen::VectorXd h2 = h1;
    Eigen::VectorXd hh = Eigen::VectorXd::Zero(mu.size());
    for (int n = 0; n < nt; ++n) path.second_step(n, h1, h2, hh);
    // m^(2)(t, mu, z, z) = hh - m^(1)(t, mu, z)
    acc += mu(z) * grid.dx() * pair(grid, phi, hh - h2);
  }
  return 0.5 * acc;
}

Eigen::VectorXd em_mean_field(const GridDensity& mu0, const ModelSpec& spec, double dt, int steps) {
  const GridSpec& grid = mu0.grid;
  if (grid.geometry != Geometry::Torus || grid.kinetic() || spec.dynamics != Dynamics::Overdamped)
    throw std::invalid_argument("em_mean_field: torus Overdamped only");
  const int G = grid.G, K = G / 2;
  const double L = grid.length(), k0 = 2 * kPi / L, dx = grid.dx();
  const Eigen::VectorXd x = grid.x_nodes();
  Eigen::MatrixXd Kp(G, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) Kp(i, j) = spec.interaction.dW(x(i) - x(j)) * dx;
  Eigen::VectorXd mu = mu0.values;
  std::vector<std::complex<double>> hat(K);
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXd force = spec.kappa * (Kp * mu);
    std::fill(hat.begin(), hat.end(), std::complex<double>(0.0));
    for (int j = 0; j < G; ++j) {
      const double y = x(j) + dt * (-spec.dA(x(j)) - force(j));
      const std::complex<double> e1 = std::polar(1.0, -k0 * y);
      std::complex<double> e = 1.0;
      for (int k = 0; k < K; ++k) {
        hat[k] += e * (mu(j) * dx);
        e *= e1;
      }
    }
    for (int i = 0; i < G; ++i) {
      double v = hat[0].real();
      const std::complex<double> e1 = std::polar(1.0, k0 * x(i));
      std::complex<double> e = e1;
      for (int k = 1; k < K; ++k) {
        v += 2 * std::exp(-0.5 * k0 * k0 * k * k * dt) * (hat[k] * e).real();
        e *= e1;
      }
      mu(i) = v / L;
    }
  }
  return mu;
}

Eigen::VectorXd fourier_truncate(const Eigen::VectorXd& f, const GridSpec& grid, int K) {
  const Eigen::VectorXd x = grid.x_nodes();
  const double k0 = 2 * kPi / grid.length();
  const int G = grid.G;
  Eigen::VectorXd c(2 * K + 1);
  c(0) = f.mean();
  for (int k = 1; k <= K; ++k) {
    c(2 * k - 1) = 2.0 / G * f.dot((k * k0 * x).array().cos().matrix());
    c(2 * k) = 2.0 / G * f.dot((k * k0 * x).array().sin().matrix());
  }
  return c;
}

namespace {

class MartingaleControl : public ReplicaAccumulator {
 public:
  MartingaleControl(std::shared_ptr<const std::vector<Eigen::VectorXd>> psi, double k0, double dt, double init)
      : psi_(std::move(psi)), k0_(k0), dt_(dt), init_(init) {
    const int K = static_cast<int>(((*psi_)[0].size() - 1) / 2);
    damp_.resize(K + 1);
    for (int k = 0; k <= K; ++k) damp_[k] = std::exp(-0.5 * k0 * k0 * k * k * dt);
  }

  void start(const ParticleState& s0) override { acc_ = eval((*psi_)[0], s0.x, nullptr) - init_; }

  void step(int n, const ParticleState& before, const Eigen::VectorXd& drift, const ParticleState& after) override {
    if (n + 1 >= static_cast<int>(psi_->size())) return;
    y_ = before.x + dt_ * drift;
    const Eigen::VectorXd& c = (*psi_)[n + 1];
    acc_ += eval(c, after.x, nullptr) - eval(c, y_, &damp_);
  }

  std::vector<double> finish() override { return {acc_}; }

 private:
  std::shared_ptr<const std::vector<Eigen::VectorXd>> psi_;
  double k0_, dt_, init_;
  std::vector<double> damp_;
  double acc_ = 0.0;
  Eigen::VectorXd y_;

  // (1/N) sum_i psi(x_i), optionally with per-mode damping
  double eval(const Eigen::VectorXd& c, const Eigen::VectorXd& x, const std::vector<double>* damp) const {
    const int K = static_cast<int>((c.size() - 1) / 2);
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double s1 = std::sin(k0_ * x(i)), c1 = std::cos(k0_ * x(i));
      double s = s1, co = c1, v = 0.0;
      for (int k = 1; k <= K; ++k) {
        const double d = damp ? (*damp)[k] : 1.0;
        v += d * (c(2 * k - 1) * co + c(2 * k) * s);
        const double sn = s * c1 + co * s1;
        co = co * c1 - s * s1;
        s = sn;
      }
      total += v;
    }
    return c(0) + total / x.size();
  }
};

}  // namespace

AccumulatorFactory martingale_control(std::vector<Eigen::VectorXd> psi, double period, double dt, double initial_mean) {
  auto shared = std::make_shared<const std::vector<Eigen::VectorXd>>(std::move(psi));
  const double k0 = 2 * kPi / period;
  return [shared, k0, dt, initial_mean]() { return std::make_unique<MartingaleControl>(shared, k0, dt, initial_mean); };
}

WeakErrorFit fit_weak_error(std::vector<WeakErrorPoint> points) {
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.N < b.N; });
  WeakErrorFit fit;
  fit.points = points;
  std::vector<double> x, v, se;
  std::vector<int> g;
  for (const auto& p : points) {
    x.push_back(p.N);
    v.push_back(p.bias.value);
    se.push_back(p.bias.stderr);
    g.push_back(0);
    if (std::abs(p.bias.value) > 3 * p.bias.stderr) fit.bias_detected = true;
  }
  fit.slope = fit_loglog_slope(x, v, se, g);
  // bias = c1 / N + c2 / N^2 by weighted least squares
  const int n = static_cast<int>(points.size());
  if (n >= 2) {
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n), w(n);
    for (int i = 0; i < n; ++i) {
      A(i, 0) = 1.0 / points[i].N;
      A(i, 1) = 1.0 / (static_cast<double>(points[i].N) * points[i].N);
      y(i) = points[i].bias.value;
      w(i) = 1.0 / std::max(1e-300, points[i].bias.stderr * points[i].bias.stderr);
    }
    const Eigen::MatrixXd AtW = A.transpose() * w.asDiagonal();
    const Eigen::MatrixXd cov = (AtW * A).inverse();
    const Eigen::VectorXd b = cov * (AtW * y);
    double inflate = 1.0;
    if (n > 2) {
      const Eigen::VectorXd r = y - A * b;
      inflate = std::max(1.0, std::sqrt(r.cwiseProduct(r).dot(w) / (n - 2)));
    }
    fit.c1 = {b(0), std::sqrt(cov(0, 0)) * inflate};
    fit.c2 = {b(1), std::sqrt(cov(1, 1)) * inflate};
  }
  std::vector<double> rx, rv, rse;
  std::vector<int> rg;
  for (int i = 0; i + 1 < n; ++i) {
    if (points[i + 1].N != 2 * points[i].N) continue;
    rx.push_back(points[i].N);
    rv.push_back(2 * points[i + 1].bias.value - points[i].bias.value);
    rse.push_back(std::hypot(2 * points[i + 1].bias.stderr, points[i].bias.stderr));
    rg.push_back(0);
  }
  fit.romberg = fit_loglog_slope(rx, rv, rse, rg, 2.0);
  return fit;
}

WeakErrorFit weak_error_fit(const Observable& phi, const ModelSpec& spec, const ReplicaPlan& base,
                            const WeakErrorConfig& cfg) {
  if (spec.geometry != Geometry::Torus || spec.dynamics != Dynamics::Overdamped)
    throw std::invalid_argument("weak_error_fit: torus Overdamped only");
  if (cfg.Ns.size() != cfg.Rs.size() || cfg.Ns.empty()) throw std::invalid_argument("weak_error_fit: N and R lists differ");
  const int steps = static_cast<int>(std::llround(cfg.t / base.dt));
  if (std::abs(steps * base.dt - cfg.t) > 1e-9) throw std::invalid_argument("weak_error_fit: t must be a multiple of dt");
  const int ratio = static_cast<int>(std::llround(base.dt / cfg.pde_dt));
  if (ratio < 1 || std::abs(ratio * cfg.pde_dt - base.dt) > 1e-12)
    throw std::invalid_argument("weak_error_fit: dt must be a multiple of pde_dt");

  // EM reference on a fine grid
  const GridSpec fine = GridSpec::torus(spec.period, 256, cfg.pde_dt);
  const GridDensity mu_fine = base.initial_law.density(spec, fine);
  const double reference = pair(fine, em_mean_field(mu_fine, spec, base.dt, steps), sample_on_grid(phi, fine));

  // dual functions for the control variate
  std::vector<Eigen::VectorXd> psi;
  double init_mean = 0.0;
  if (cfg.control_variate) {
    const GridSpec pde = GridSpec::torus(spec.period, cfg.pde_G, cfg.pde_dt);
    const MeanFieldPath path = solve_path(base.initial_law.density(spec, pde), spec, cfg.t);
    const std::vector<Eigen::VectorXd> dual = dual_series(sample_on_grid(phi, pde), path, cfg.t);
    for (int n = 0; n <= steps; ++n) psi.push_back(fourier_truncate(dual[n * ratio], pde, cfg.cv_modes));
    const Eigen::VectorXd xf = fine.x_nodes();
    const double k0 = 2 * kPi / spec.period;
    Eigen::VectorXd p0 = Eigen::VectorXd::Constant(fine.G, psi[0](0));
    for (int k = 1; k <= cfg.cv_modes; ++k)
      p0 += psi[0](2 * k - 1) * (k * k0 * xf).array().cos().matrix() + psi[0](2 * k) * (k * k0 * xf).array().sin().matrix();
    init_mean = pair(fine, mu_fine.values, p0);
  }

  std::vector<WeakErrorPoint> points;
  for (std::size_t i = 0; i < cfg.Ns.size(); ++i) {
    ReplicaPlan p = base;
    p.N = cfg.Ns[i];
    p.R = cfg.Rs[i];
    p.T = cfg.t;
    p.record_times = {cfg.t};
    p.master_seed = base.master_seed + 7919ULL * static_cast<std::uint64_t>(p.N);
    const ObservableSeries s = simulate_ensemble(
        p, spec, {phi}, cfg.control_variate ? martingale_control(psi, spec.period, p.dt, init_mean) : nullptr);
    const Eigen::VectorXd raw = s.column(0, 0);
    Eigen::VectorXd y = raw;
    if (cfg.control_variate) y -= s.extra_column(0);
    WeakErrorPoint pt;
    pt.N = p.N;
    pt.R = static_cast<int>(y.size());
    const double var = (y.array() - y.mean()).square().sum() / (y.size() - 1);
    const double var_raw = (raw.array() - raw.mean()).square().sum() / (raw.size() - 1);
    pt.mean = {y.mean(), std::sqrt(var / y.size())};
    pt.reference = reference;
    pt.bias = {pt.mean.value - reference, pt.mean.stderr};
    pt.variance_reduction = var > 0.0 ? var_raw / var : 1.0;
    points.push_back(pt);
  }
  return fit_weak_error(points);
}

// ---- correlation scaling ----

std::vector<Observable> power_observables(const Observable& phi, int m) {
  std::vector<Observable> out;
  for (int p = 1; p <= m; ++p) {
    Observable o;
    o.name = p == 1 ? phi.name : phi.name + "^" + std::to_string(p);
    auto f = phi.f;
    o.f = [f, p](double x, double v) { return std::pow(f(x, v), p); };
    o.sup_bound = std::pow(phi.sup_bound, p);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<ScalingPoint> estimate_pairings(const ObservableSeries& s, int N, int m, int jackknife_blocks) {
  if (static_cast<int>(s.names.size()) < m) throw std::invalid_argument("estimate_pairings: need m power observables");
  std::vector<PowerKey> keys = lower_pairing_keys(m);
  keys.push_back(PowerKey(m, 1));
  std::vector<ScalingPoint> out;
  for (std::size_t ti = 0; ti < s.times.size(); ++ti) {
    if (s.times[ti] <= 0.0) continue;
    std::vector<Eigen::VectorXd> cols;
    for (int p = 1; p <= m; ++p) cols.push_back(s.column(static_cast<int>(ti), p - 1));
    const double R = static_cast<double>(cols[0].size());
    PairingTable table;
    for (const PowerKey& key : keys) {
      if (key.size() == 1) {
        const Eigen::VectorXd& c = cols[key[0] - 1];
        const double sd = std::sqrt((c.array() - c.mean()).square().sum() / (R - 1));
        table[key] = {c.mean(), sd / std::sqrt(R)};
        continue;
      }
      Estimate kappa;
      if (key == PowerKey(m, 1)) {
        const CumulantTable k = k_statistics(cols[0], m);
        kappa = {k.values[m - 1], k.stderrs[m - 1]};
      } else {
        std::vector<const Eigen::VectorXd*> ptrs;
        for (int p : key) ptrs.push_back(&cols[p - 1]);
        kappa = {unbiased_joint_cumulant(ptrs), block_jackknife_se(ptrs, jackknife_blocks)};
      }
      table[key] = solve_pairing(key, kappa, table, N);
    }
    out.push_back({N, s.times[ti], table[PowerKey(m, 1)]});
  }
  return out;
}

ScalingReport scaling_report(const std::string& name, int m, const std::vector<ScalingPoint>& points) {
  ScalingReport rep;
  rep.observable = name;
  rep.m = m;
  rep.points = points;
  std::vector<double> x, v, se;
  std::vector<int> g;
  std::map<double, int> tindex;
  for (const auto& p : points) {
    if (!tindex.count(p.t)) tindex[p.t] = static_cast<int>(tindex.size());
    x.push_back(p.N);
    v.push_back(p.pairing.value);
    se.push_back(p.pairing.stderr);
    g.push_back(tindex[p.t]);
  }
  rep.slope = fit_loglog_slope(x, v, se, g);
  std::map<int, std::vector<double>> byN;
  for (const auto& p : points) byN[p.N].push_back(std::pow(p.N, m - 1) * std::abs(p.pairing.value));
  for (auto& [N, vals] : byN) {
    rep.Ns.push_back(N);
    const double med = median(vals);
    rep.uniformity.push_back(med > 0.0 ? *std::max_element(vals.begin(), vals.end()) / med : INFINITY);
  }
  return rep;
}

ScalingReport correlation_scaling(const Observable& phi, const ModelSpec& spec, const ReplicaPlan& base, int m,
                                  const std::vector<int>& Ns, const std::vector<int>& Rs) {
  if (Ns.size() != Rs.size()) throw std::invalid_argument("correlation_scaling: N and R lists differ");
  const std::vector<Observable> obs = power_observables(phi, m);
  std::vector<ScalingPoint> all;
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    ReplicaPlan p = base;
    p.N = Ns[i];
    p.R = Rs[i];
    p.master_seed = base.master_seed + 104729ULL * static_cast<std::uint64_t>(p.N);
    const ObservableSeries s = simulate_ensemble(p, spec, obs);
    auto pts = estimate_pairings(s, p.N, m);
    all.insert(all.end(), pts.begin(), pts.end());
  }
  return scaling_report(phi.name, m, all);
}

// ---- concentration ----

double w3_norm(const std::function<double(double)>& phi, double lo, double hi, double h) {
  double best = 0.0;
  const int n = std::max(2, static_cast<int>(std::ceil((hi - lo) / (10 * h))));
  for (int i = 0; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double f0 = phi(x), fp = phi(x + h), fm = phi(x - h), fp2 = phi(x + 2 * h), fm2 = phi(x - 2 * h);
    const double d1 = (fp - fm) / (2 * h);
    const double d2 = (fp - 2 * f0 + fm) / (h * h);
    const double d3 = (fp2 - 2 * fp + 2 * fm - fm2) / (2 * h * h * h);
    best = std::max({best, std::abs(f0), std::abs(d1), std::abs(d2), std::abs(d3)});
  }
  return best;
}

std::vector<TailPoint> tail_points(const Eigen::VectorXd& values, int N, double t, const std::vector<double>& z,
                                   double phi_norm, int min_count) {
  const double R = static_cast<double>(values.size());
  const double mean = values.mean();
  const double sd = std::sqrt((values.array() - mean).square().sum() / (R - 1));
  std::vector<TailPoint> out;
  for (double zz : z) {
    const double r = zz * sd;
    const int count = static_cast<int>((values.array() - mean >= r).count());
    if (count < min_count || count == values.size()) continue;
    TailPoint p;
    p.N = N;
    p.t = t;
    p.r = r;
    p.count = count;
    p.prob = count / R;
    p.c_hat = N * r * r / (2 * phi_norm * phi_norm * (-std::log(p.prob)));
    out.push_back(p);
  }
  return out;
}

ConcentrationReport concentration_report(const std::vector<TailPoint>& points, double phi_norm, double sup_norm) {
  ConcentrationReport rep;
  rep.w3_norm = phi_norm;
  rep.sup_norm = sup_norm;
  rep.points = points;
  std::set<int> Ns;
  std::set<double> ts;
  for (const auto& p : points) {
    Ns.insert(p.N);
    ts.insert(p.t);
  }
  rep.Ns.assign(Ns.begin(), Ns.end());
  rep.times.assign(ts.begin(), ts.end());
  rep.c_hat = Eigen::MatrixXd::Zero(rep.Ns.size(), rep.times.size());
  for (const auto& p : points) {
    const auto i = std::find(rep.Ns.begin(), rep.Ns.end(), p.N) - rep.Ns.begin();
    const auto j = std::find(rep.times.begin(), rep.times.end(), p.t) - rep.times.begin();
    rep.c_hat(i, j) = std::max(rep.c_hat(i, j), p.c_hat);
  }
  if (rep.c_hat.size() > 0) {
    rep.c_overall = rep.c_hat.maxCoeff();
    const double lo = rep.c_hat.minCoeff();
    rep.stability = lo > 0.0 ? rep.c_overall / lo : INFINITY;
  }
  return rep;
}

}  // namespace chaoslab

#include "chaoslab/particle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace chaoslab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double centred(double x, const ModelSpec& spec) {
  if (spec.geometry == Geometry::Line) return x;
  const double L = spec.period;
  return x > 0.5 * L ? x - L : x;
}

bool cosine_torus(const ModelSpec& spec) {
  return spec.geometry == Geometry::Torus && spec.interaction.family == PotentialSpec::Family::CosineSum;
}

// sin and cos to about 1 ulp for moderate |th|; quadrant reduction plus Taylor polynomials.
inline void sincos_fast(double th, double& s, double& c) {
  constexpr double two_over_pi = 0.63661977236758134308;
  constexpr double p1 = 1.5707963267341256e+00, p2 = 6.0771005065061922e-11, p3 = 2.0222662487959506e-21;
  const double q = std::nearbyint(th * two_over_pi);
  const double r = ((th - q * p1) - q * p2) - q * p3;
  const double r2 = r * r;
  const double sp =
      r + r * r2 *
              (-1.0 / 6 + r2 * (1.0 / 120 + r2 * (-1.0 / 5040 + r2 * (1.0 / 362880 + r2 * (-1.0 / 39916800 +
                                                     r2 * (1.0 / 6227020800 + r2 * (-1.0 / 1307674368000)))))));
  const double cp =
      1.0 + r2 * (-0.5 + r2 * (1.0 / 24 + r2 * (-1.0 / 720 + r2 * (1.0 / 40320 + r2 * (-1.0 / 3628800 +
                                                     r2 * (1.0 / 479001600 + r2 * (-1.0 / 87178291200 +
                                                                                  r2 * (1.0 / 20922789888000))))))));
  switch (static_cast<long long>(q) & 3) {
    case 0: s = sp; c = cp; break;
    case 1: s = cp; c = -sp; break;
    case 2: s = -sp; c = -cp; break;
    default: s = -cp; c = sp; break;
  }
}

struct TrigScratch {
  Eigen::VectorXd s1, c1, sn, cs;
};

// Force into `out`; scratch buffers are reused across steps.
void force_into(const Eigen::VectorXd& x, const ModelSpec& spec, Eigen::VectorXd& out, TrigScratch& tr) {
  const Eigen::Index N = x.size();
  out.setZero(N);
  if (spec.kappa == 0.0) return;
  if (cosine_torus(spec)) {
    const double k0 = kTwoPi / spec.period;
    const auto& w = spec.interaction.params;
    Eigen::VectorXd &s1 = tr.s1, &c1 = tr.c1, &sn = tr.sn, &cs = tr.cs;
    s1.resize(N);
    c1.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) sincos_fast(k0 * x(i), s1(i), c1(i));
    for (std::size_t n = 0; n < w.size(); ++n) {
      if (n == 0) {
        sn = s1;
        cs = c1;
      } else {
        // angle addition: mode n+1 from mode n
        for (Eigen::Index i = 0; i < N; ++i) {
          const double s = sn(i) * c1(i) + cs(i) * s1(i);
          const double c = cs(i) * c1(i) - sn(i) * s1(i);
          sn(i) = s;
          cs(i) = c;
        }
      }
      if (w[n] == 0.0) continue;
      const double S = sn.sum(), C = cs.sum();
      const double k = (n + 1) * k0;
      // W'(x_i - x_j) summed over j = -w k [sin(k x_i) C - cos(k x_i) S]
      out.noalias() += (-w[n] * k) * (C * sn - S * cs);
    }
    out *= spec.kappa / static_cast<double>(N);
    return;
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) s += spec.interaction.dW(x(i) - x(j));
    out(i) = s;
  }
  out *= spec.kappa / static_cast<double>(N);
}

struct Workspace {
  Eigen::VectorXd force, noise, drift;
  TrigScratch trig;
  bool force_current = false;  // ws.force already matches the positions
};

void drift_into(const ParticleState& s, const ModelSpec& spec, Workspace& ws) {
  if (!ws.force_current) force_into(s.x, spec, ws.force, ws.trig);
  ws.force_current = false;
  const Eigen::Index N = s.x.size();
  ws.drift.resize(N);
  if (spec.a == 0.0) {
    ws.drift = -ws.force;
  } else {
    for (Eigen::Index i = 0; i < N; ++i) ws.drift(i) = -spec.dA(s.x(i)) - ws.force(i);
  }
  if (spec.dynamics == Dynamics::Langevin) ws.drift -= 0.5 * spec.beta * s.v;
}

void wrap_positions(Eigen::VectorXd& x, const ModelSpec& spec) {
  if (spec.geometry != Geometry::Torus) return;
  const double L = spec.period;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double& y = x(i);
    if (y < 0.0) {
      y += L;
      if (y < 0.0 || y >= L) y = spec.wrap(y);
    } else if (y >= L) {
      y -= L;
      if (y < 0.0 || y >= L) y = spec.wrap(y);
    }
  }
}

// Advances s in place by one step; ws.drift must hold the drift at s on entry.
void advance(ParticleState& s, const ModelSpec& spec, double dt, Integrator integ, const CounterRng& rng,
             std::uint64_t n, Workspace& ws) {
  const Eigen::Index N = s.x.size();
  ws.noise.resize(N);
  rng.normals(n, N, ws.noise.data());
  const double sq = std::sqrt(dt);
  if (spec.dynamics == Dynamics::Overdamped) {
    s.x += dt * ws.drift + sq * ws.noise;
  } else if (integ == Integrator::EulerMaruyama) {
    s.x += dt * s.v;
    s.v += dt * ws.drift + sq * ws.noise;
  } else {
    // B A O A B; ws.drift holds -(beta/2) v + force, so add back the friction part.
    ws.drift += 0.5 * spec.beta * s.v;
    s.v += 0.5 * dt * ws.drift;
    s.x += 0.5 * dt * s.v;
    const double e = std::exp(-0.5 * spec.beta * dt);
    s.v = e * s.v + std::sqrt((1.0 - e * e) / spec.beta) * ws.noise;
    s.x += 0.5 * dt * s.v;
    wrap_positions(s.x, spec);
    force_into(s.x, spec, ws.force, ws.trig);
    s.v -= 0.5 * dt * ws.force;
    if (spec.a != 0.0)
      for (Eigen::Index i = 0; i < N; ++i) s.v(i) -= 0.5 * dt * spec.dA(s.x(i));
    ws.force_current = true;
    s.time += dt;
    return;
  }
  wrap_positions(s.x, spec);
  s.time += dt;
}

}  // namespace

// ---- initial laws ----

InitialLaw::Kind parse_initial_law(const std::string& s) {
  if (s == "gaussian_line") return InitialLaw::Kind::GaussianLine;
  if (s == "uniform_torus") return InitialLaw::Kind::UniformTorus;
  if (s == "wrapped_gaussian") return InitialLaw::Kind::WrappedGaussianTorus;
  if (s == "compact_uniform") return InitialLaw::Kind::CompactUniform;
  throw std::invalid_argument("unknown initial law '" + s +
                              "' (gaussian_line|uniform_torus|wrapped_gaussian|compact_uniform)");
}

std::string to_string(InitialLaw::Kind k) {
  switch (k) {
    case InitialLaw::Kind::GaussianLine: return "gaussian_line";
    case InitialLaw::Kind::UniformTorus: return "uniform_torus";
    case InitialLaw::Kind::WrappedGaussianTorus: return "wrapped_gaussian";
    case InitialLaw::Kind::CompactUniform: return "compact_uniform";
  }
  return "?";
}

std::string InitialLaw::name() const { return to_string(kind); }

void InitialLaw::validate(const ModelSpec& spec) const {
  switch (kind) {
    case Kind::GaussianLine:
      if (spec.geometry != Geometry::Line) throw std::invalid_argument("gaussian_line needs line geometry");
      if (!(p2 > 0.0)) throw std::invalid_argument("initial variance must be positive");
      break;
    case Kind::UniformTorus:
      if (spec.geometry != Geometry::Torus) throw std::invalid_argument("uniform_torus needs torus geometry");
      break;
    case Kind::WrappedGaussianTorus:
      if (spec.geometry != Geometry::Torus) throw std::invalid_argument("wrapped_gaussian needs torus geometry");
      if (!(p2 > 0.0)) throw std::invalid_argument("initial variance must be positive");
      break;
    case Kind::CompactUniform:
      if (!(p2 > p1)) throw std::invalid_argument("compact_uniform needs lo < hi");
      if (spec.geometry == Geometry::Torus && p2 - p1 > spec.period)
        throw std::invalid_argument("compact_uniform interval longer than the torus");
      break;
  }
}

double InitialLaw::sample(double u1, double u2, const ModelSpec& spec) const {
  switch (kind) {
    case Kind::GaussianLine:
    case Kind::WrappedGaussianTorus: {
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
      return spec.wrap(p1 + std::sqrt(p2) * z);
    }
    case Kind::UniformTorus: return spec.wrap(u1 * spec.period);
    case Kind::CompactUniform: return spec.wrap(p1 + (p2 - p1) * u1);
  }
  return 0.0;
}

GridDensity InitialLaw::density(const ModelSpec& spec, const GridSpec& grid) const {
  validate(spec);
  const Eigen::VectorXd x = grid.x_nodes();
  Eigen::VectorXd rho(grid.G);
  for (int i = 0; i < grid.G; ++i) {
    switch (kind) {
      case Kind::GaussianLine: rho(i) = std::exp(-(x(i) - p1) * (x(i) - p1) / (2.0 * p2)); break;
      case Kind::WrappedGaussianTorus: {
        const double L = spec.period;
        const int images = static_cast<int>(std::ceil(9.0 * std::sqrt(p2) / L)) + 1;
        double s = 0.0;
        for (int j = -images; j <= images; ++j) {
          const double y = x(i) - p1 - j * L;
          s += std::exp(-y * y / (2.0 * p2));
        }
        rho(i) = s;
        break;
      }
      case Kind::UniformTorus: rho(i) = 1.0; break;
      case Kind::CompactUniform: {
        double y = x(i);
        if (spec.geometry == Geometry::Torus) y = p1 + spec.wrap(y - p1);
        const double h = 0.5 * grid.dx();
        rho(i) = std::clamp((std::min(y + h, p2) - std::max(y - h, p1)) / (2.0 * h), 0.0, 1.0);
        break;
      }
    }
  }
  rho /= rho.sum() * grid.dx();
  GridDensity d;
  d.grid = grid;
  if (!grid.kinetic()) {
    d.values = rho;
    return d;
  }
  const Eigen::VectorXd v = grid.v_nodes();
  Eigen::VectorXd g = (-0.5 * spec.beta * v.array().square()).exp();
  g /= g.sum() * grid.dv();
  d.values.resize(grid.size());
  for (int i = 0; i < grid.G; ++i)
    for (int j = 0; j < grid.G_v; ++j) d.values(i * grid.G_v + j) = rho(i) * g(j);
  return d;
}

// ---- plan ----

int ReplicaPlan::steps() const { return static_cast<int>(std::llround(T / dt)); }

std::vector<int> ReplicaPlan::record_steps() const {
  std::vector<int> s;
  for (double t : record_times) s.push_back(static_cast<int>(std::llround(t / dt)));
  return s;
}

void ReplicaPlan::finalize() {
  if (!(dt > 0.0)) throw std::invalid_argument("plan: dt must be positive");
  if (N < 1) throw std::invalid_argument("plan: N must be >= 1");
  if (R < 1) throw std::invalid_argument("plan: R must be >= 1");
  if (!(T >= 0.0)) throw std::invalid_argument("plan: T must be nonnegative");
  if (threads < 1) throw std::invalid_argument("plan: threads must be >= 1");
  if (record_times.empty()) throw std::invalid_argument("plan: no record times");
  for (double& t : record_times) {
    if (t < 0.0 || t > T + 1e-9 * std::max(1.0, T)) throw std::invalid_argument("plan: record time outside [0, T]");
    t = std::llround(t / dt) * dt;
  }
  std::sort(record_times.begin(), record_times.end());
  record_times.erase(std::unique(record_times.begin(), record_times.end()), record_times.end());
  T = steps() * dt;
}

// ---- observables ----

Observable cos_observable(int mode, double period, int power) {
  const double k = kTwoPi * mode / period;
  std::string name = "cos" + std::to_string(mode) + (power == 1 ? "" : "^" + std::to_string(power));
  return {name, [k, power](double x, double) { return std::pow(std::cos(k * x), power); }, 1.0};
}

Observable position_power(int power) {
  return {"x^" + std::to_string(power), [power](double x, double) { return std::pow(x, power); }, INFINITY};
}

Eigen::VectorXd ObservableSeries::column(int t, int o) const {
  std::vector<double> out;
  for (int r = 0; r < R; ++r)
    if (!diverged[r]) out.push_back(value(r, t, o));
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

Eigen::VectorXd ObservableSeries::extra_column(int k) const {
  std::vector<double> out;
  for (int r = 0; r < R; ++r)
    if (!diverged[r]) out.push_back(extra[static_cast<std::size_t>(r) * extra_width + k]);
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

Eigen::VectorXd ObservableSeries::q2_column(int t) const {
  std::vector<double> out;
  for (int r = 0; r < R; ++r)
    if (!diverged[r]) out.push_back(q2[static_cast<std::size_t>(r) * times.size() + t]);
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

// ---- dynamics ----

Eigen::VectorXd pair_force(const Eigen::VectorXd& x, const ModelSpec& spec) {
  Eigen::VectorXd out;
  TrigScratch tr;
  force_into(x, spec, out, tr);
  return out;
}

Eigen::VectorXd pair_force_direct(const Eigen::VectorXd& x, const ModelSpec& spec) {
  const Eigen::Index N = x.size();
  Eigen::VectorXd out(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) s += spec.interaction.dW(x(i) - x(j));
    out(i) = spec.kappa * s / static_cast<double>(N);
  }
  return out;
}

Eigen::VectorXd particle_drift(const ParticleState& s, const ModelSpec& spec) {
  Workspace ws;
  drift_into(s, spec, ws);
  return ws.drift;
}

ParticleState initial_state(const ReplicaPlan& plan, const ModelSpec& spec, const CounterRng& rng) {
  ParticleState s;
  s.x.resize(plan.N);
  for (int i = 0; i < plan.N; ++i)
    s.x(i) = plan.initial_law.sample(rng.uniform(CounterRng::kInitStep, 2 * i),
                                     rng.uniform(CounterRng::kInitStep, 2 * i + 1), spec);
  if (spec.dynamics == Dynamics::Langevin) {
    s.v.resize(plan.N);
    rng.normals(CounterRng::kInitStep - 1, plan.N, s.v.data());
    s.v /= std::sqrt(spec.beta);
  }
  return s;
}

ParticleState em_step(const ParticleState& s, const ModelSpec& spec, double dt, const CounterRng& rng,
                      std::uint64_t n) {
  if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be positive");
  Workspace ws;
  ParticleState out = s;
  drift_into(out, spec, ws);
  advance(out, spec, dt, Integrator::EulerMaruyama, rng, n, ws);
  return out;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int r = 0; r < count; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= count) return;
        try {
          body(r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

ObservableSeries simulate_ensemble(const ReplicaPlan& plan_in, const ModelSpec& spec,
                                   const std::vector<Observable>& observables,
                                   const AccumulatorFactory& accumulator) {
  spec.validate();
  ReplicaPlan plan = plan_in;
  plan.finalize();
  plan.initial_law.validate(spec);

  ObservableSeries out;
  out.R = plan.R;
  out.times = plan.record_times;
  for (const auto& o : observables) out.names.push_back(o.name);
  const std::size_t nt = out.times.size(), no = observables.size();
  out.values.assign(static_cast<std::size_t>(plan.R) * nt * no, 0.0);
  out.q2.assign(static_cast<std::size_t>(plan.R) * nt, 0.0);
  out.diverged.assign(plan.R, 0);
  std::vector<std::vector<double>> extras(plan.R);

  const std::vector<int> rec = plan.record_steps();
  const int steps = plan.steps();
  const bool langevin = spec.dynamics == Dynamics::Langevin;

  parallel_for(plan.R, plan.threads, [&](int r) {
    const CounterRng rng(plan.master_seed, static_cast<std::uint64_t>(r));
    ParticleState s = initial_state(plan, spec, rng);
    std::unique_ptr<ReplicaAccumulator> acc = accumulator ? accumulator() : nullptr;
    if (acc) acc->start(s);
    Workspace ws;
    std::size_t next = 0;
    bool bad = false;
    auto record = [&](std::size_t ti) {
      if (!s.x.allFinite() || (langevin && !s.v.allFinite())) {
        bad = true;
        return;
      }
      const double invN = 1.0 / s.N();
      for (std::size_t o = 0; o < no; ++o) {
        double sum = 0.0;
        for (int i = 0; i < s.N(); ++i) sum += observables[o].f(s.x(i), langevin ? s.v(i) : 0.0);
        out.value(r, static_cast<int>(ti), static_cast<int>(o)) = sum * invN;
      }
      double q = 0.0;
      for (int i = 0; i < s.N(); ++i) {
        const double y = centred(s.x(i), spec);
        q += 1.0 + y * y + (langevin ? s.v(i) * s.v(i) : 0.0);
      }
      out.q2[static_cast<std::size_t>(r) * nt + ti] = q * invN;
    };
    while (next < nt && rec[next] == 0) record(next++);
    ParticleState before;
    for (int n = 0; n < steps && !bad; ++n) {
      drift_into(s, spec, ws);
      if (acc) before = s;
      Eigen::VectorXd drift_copy;
      if (acc) drift_copy = ws.drift;
      advance(s, spec, plan.dt, plan.integrator, rng, static_cast<std::uint64_t>(n), ws);
      if (acc) acc->step(n, before, drift_copy, s);
      while (next < nt && rec[next] == n + 1) record(next++);
      if (!bad && (n & 63) == 63 && !s.x.allFinite()) bad = true;
    }
    if (bad) {
      out.diverged[r] = 1;
      for (std::size_t ti = 0; ti < nt; ++ti)
        for (std::size_t o = 0; o < no; ++o) out.value(r, static_cast<int>(ti), static_cast<int>(o)) = NAN;
      return;
    }
    if (acc) extras[r] = acc->finish();
  });

  out.diverged_count = static_cast<int>(std::count(out.diverged.begin(), out.diverged.end(), 1));
  if (accumulator) {
    for (const auto& e : extras)
      if (!e.empty()) {
        out.extra_width = static_cast<int>(e.size());
        break;
      }
    out.extra.assign(static_cast<std::size_t>(plan.R) * out.extra_width, NAN);
    for (int r = 0; r < plan.R; ++r)
      if (!out.diverged[r])
        std::copy(extras[r].begin(), extras[r].end(), out.extra.begin() + static_cast<std::size_t>(r) * out.extra_width);
  }
  if (out.diverged_count * 1000 > plan.R) {
    std::ostringstream os;
    os << "simulate_ensemble: " << out.diverged_count << " of " << plan.R << " replicas diverged (limit 0.1%)";
    throw DivergenceError(os.str());
  }
  return out;
}

}  // namespace chaoslab

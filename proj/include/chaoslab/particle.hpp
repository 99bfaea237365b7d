#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaoslab/grid.hpp"
#include "chaoslab/model.hpp"
#include "chaoslab/rng.hpp"

namespace chaoslab {

struct ParticleState {
  Eigen::VectorXd x;
  Eigen::VectorXd v;  // empty for Overdamped
  double time = 0.0;

  int N() const { return static_cast<int>(x.size()); }
};

// Initial position law; Langevin velocities are drawn from N(0, 1/beta).
struct InitialLaw {
  enum class Kind { GaussianLine, UniformTorus, WrappedGaussianTorus, CompactUniform };
  Kind kind = Kind::UniformTorus;
  double p1 = 0.0;  // mean or lo
  double p2 = 1.0;  // var or hi

  static InitialLaw gaussian_line(double mean, double var) { return {Kind::GaussianLine, mean, var}; }
  static InitialLaw uniform_torus() { return {Kind::UniformTorus, 0.0, 0.0}; }
  static InitialLaw wrapped_gaussian(double mean, double var) { return {Kind::WrappedGaussianTorus, mean, var}; }
  static InitialLaw compact_uniform(double lo, double hi) { return {Kind::CompactUniform, lo, hi}; }

  void validate(const ModelSpec& spec) const;
  // Position from two independent uniforms on (0,1).
  double sample(double u1, double u2, const ModelSpec& spec) const;
  // Spatial density on the grid, normalized to unit mass. Kinetic grids get the Maxwellian factor.
  GridDensity density(const ModelSpec& spec, const GridSpec& grid) const;
  std::string name() const;
};

InitialLaw::Kind parse_initial_law(const std::string& s);
std::string to_string(InitialLaw::Kind k);

enum class Integrator { EulerMaruyama, BAOAB };

struct ReplicaPlan {
  int N = 64;
  int R = 100;
  double dt = 0.01;
  double T = 1.0;
  std::vector<double> record_times{0.0};
  std::uint64_t master_seed = 1;
  InitialLaw initial_law;
  Integrator integrator = Integrator::EulerMaruyama;
  int threads = 1;

  // Snaps record times to multiples of dt, sorts them and validates the plan.
  void finalize();
  int steps() const;
  std::vector<int> record_steps() const;
};

// phi(x, v); v is 0 for Overdamped.
struct Observable {
  std::string name;
  std::function<double(double, double)> f;
  double sup_bound = 0.0;
};

Observable cos_observable(int mode, double period, int power = 1);
Observable position_power(int power);

// Per-replica hook into the time loop, used by estimators that need whole paths.
class ReplicaAccumulator {
 public:
  virtual ~ReplicaAccumulator() = default;
  virtual void start(const ParticleState& s0) = 0;
  // `drift` is b(X_n, mu^N_n) evaluated at the pre-step state.
  virtual void step(int n, const ParticleState& before, const Eigen::VectorXd& drift, const ParticleState& after) = 0;
  virtual std::vector<double> finish() = 0;
};

using AccumulatorFactory = std::function<std::unique_ptr<ReplicaAccumulator>()>;

struct ObservableSeries {
  int R = 0;
  std::vector<double> times;
  std::vector<std::string> names;
  // value(r, t, o) = <phi_o, mu^N_t> in replica r.
  std::vector<double> values;
  // q2(r, t) = integral of (1 + |z|^2) against mu^N_t; torus positions taken in (-L/2, L/2].
  std::vector<double> q2;
  std::vector<double> extra;  // R x extra_width from the accumulator
  int extra_width = 0;
  std::vector<char> diverged;
  int diverged_count = 0;

  double value(int r, int t, int o) const { return values[(static_cast<std::size_t>(r) * times.size() + t) * names.size() + o]; }
  double& value(int r, int t, int o) { return values[(static_cast<std::size_t>(r) * times.size() + t) * names.size() + o]; }
  // Values of observable o at record index t over non-diverged replicas.
  Eigen::VectorXd column(int t, int o) const;
  Eigen::VectorXd extra_column(int k) const;
  Eigen::VectorXd q2_column(int t) const;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// F_i = (kappa/N) sum_j W'(x_i - x_j). Cosine potentials on the torus use the O(N K) trig-sum form.
Eigen::VectorXd pair_force(const Eigen::VectorXd& x, const ModelSpec& spec);
Eigen::VectorXd pair_force_direct(const Eigen::VectorXd& x, const ModelSpec& spec);

// Drift of every particle at the current state (positions for Overdamped, velocities' drift for
// Langevin).
Eigen::VectorXd particle_drift(const ParticleState& s, const ModelSpec& spec);

ParticleState initial_state(const ReplicaPlan& plan, const ModelSpec& spec, const CounterRng& rng);

// One Euler-Maruyama step with the noise of step `n` from `rng`.
ParticleState em_step(const ParticleState& s, const ModelSpec& spec, double dt, const CounterRng& rng,
                      std::uint64_t n);

// Runs all replicas. Output does not depend on plan.threads. Throws DivergenceError when more than
// 0.1% of replicas produce non-finite states.
ObservableSeries simulate_ensemble(const ReplicaPlan& plan, const ModelSpec& spec,
                                   const std::vector<Observable>& observables,
                                   const AccumulatorFactory& accumulator = nullptr);

// Runs body(r) for r in [0, count) on `threads` workers.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

}  // namespace chaoslab

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaoslab/grid.hpp"
#include "chaoslab/partitions.hpp"
#include "chaoslab/particle.hpp"

namespace chaoslab {

// X(Z^1..Z^N) on initial positions.
using ConfigFunctional = std::function<double(const Eigen::VectorXd&)>;

// Base configuration drawn i.i.d. from the initial law, plus the inner resample budget.
struct GlauberSample {
  Eigen::VectorXd z;
  int K = 100;
};

// Draws from the initial law with the same (seed, replica) streams as the particle module.
class InitialSampler {
 public:
  InitialSampler(InitialLaw law, ModelSpec spec, std::uint64_t seed);
  GlauberSample draw(int N, std::uint64_t replica, int K) const;
  // i-th resample of coordinate j for the given replica.
  double resample(std::uint64_t replica, int j, int i) const;
  double expectation(const std::function<double(double)>& phi) const;
  const InitialLaw& law() const { return law_; }
  const ModelSpec& spec() const { return spec_; }

 private:
  InitialLaw law_;
  ModelSpec spec_;
  std::uint64_t seed_;
};

// D_j X = X - E[X | Z^i, i != j] by K inner resamples of Z^j. Throws if K < 100.
Estimate glauber_derivative(const ConfigFunctional& X, const InitialSampler& sampler, const GlauberSample& sample,
                            std::uint64_t replica, int j);

// Closed form for X = <phi, mu_0^N>: (phi(Z^j) - E phi) / N.
double linear_glauber_derivative(const std::function<double(double)>& phi, double phi_mean, const Eigen::VectorXd& z,
                                 int j);

struct EfronSteinReport {
  Estimate variance;
  Estimate glauber_energy;  // sum_j E |D_j X|^2, inner-noise corrected
  double ci = 0.0;          // 95% half-width of the difference
  bool holds = false;       // variance <= energy + ci
  bool equal = false;       // |variance - energy| <= ci
  // E[D_j X] over the outer samples, per j
  std::vector<Estimate> mean_derivative;
};

struct GlauberPlan {
  int N = 8;
  int outer = 400;
  int K = 100;
  std::uint64_t seed = 1;
  int threads = 1;
};

EfronSteinReport efron_stein_check(const ConfigFunctional& X, const InitialSampler& sampler, const GlauberPlan& plan);

struct LinearGlauberReport {
  double max_z = 0.0;            // largest |MC - closed form| / stderr
  double max_bound_ratio = 0.0;  // largest |D_j| N / (2 sup|phi|)
  int checked = 0;
  int within3 = 0;  // comparisons within 3 stderr
};

// Compares MC and closed-form derivatives of <phi, mu_0^N> and checks |D_j| <= 2 sup|phi| / N.
LinearGlauberReport linear_glauber_check(const std::function<double(double)>& phi, double sup_phi,
                                         const InitialSampler& sampler, const GlauberPlan& plan);

// The three reference functionals.
ConfigFunctional coordinate_functional(int index);
ConfigFunctional linear_functional(std::function<double(double)> phi);
// <phi, m(t, mu_0^N)>: the empirical measure is deposited on `grid` with a Fejer (torus) or hat
// (line) kernel of `width` cells and evolved by the mean-field equation.
ConfigFunctional pde_functional(const Eigen::VectorXd& phi, const ModelSpec& spec, const GridSpec& grid, double t,
                                double width = 2.0);

}  // namespace chaoslab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaoslab/meanfield.hpp"
#include "chaoslab/partitions.hpp"
#include "chaoslab/particle.hpp"

namespace chaoslab {

// ---- small statistics toolkit ----

struct SlopeFit {
  double slope = 0.0;
  double stderr = 0.0;
  double ci = 0.0;  // 95% half-width, inflated by sqrt(reduced chi^2) when above 1
  int used = 0;
  bool conclusive = false;
};

// Weighted least squares of y on log-log data with one intercept per group and a common slope.
// Points with |value| <= min_snr * stderr are dropped.
SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& value,
                          const std::vector<double>& stderr, const std::vector<int>& group, double min_snr = 3.0);

double normal_cdf(double z);
// sup_x |F_emp(x) - Phi(x / sigma)| for centred samples.
double ks_distance(std::vector<double> samples, double sigma);
// Percentile bootstrap (95%) of the KS distance; deterministic in `seed`.
std::pair<double, double> ks_bootstrap(const std::vector<double>& samples, double sigma, int B, std::uint64_t seed);

// Sample variance with the standard error of k_2 (jackknife).
Estimate sample_variance(const Eigen::VectorXd& x);

// ---- CLT ----

struct CltVariance {
  double sigma_C2 = 0.0;
  double sigma_D2 = 0.0;
  double sigma2 = 0.0;
};

// Limit variance of sqrt(N) (<phi, mu^N_t> - <phi, mu_t>) from the dual flow along the path.
CltVariance clt_variance(const Eigen::VectorXd& phi, const MeanFieldPath& path, double t);
CltVariance clt_variance(const Observable& phi, const GridDensity& mu0, const ModelSpec& spec, double t);

// Observable sampled on the grid nodes (v nodes as well for kinetic grids).
Eigen::VectorXd sample_on_grid(const Observable& phi, const GridSpec& grid);

struct CltReport {
  double t = 0.0;
  int N = 0;
  int R = 0;
  double mean_field = 0.0;
  CltVariance predicted;
  Estimate n_var;  // N * sample variance of <phi, mu^N_t>
  double ks = 0.0;
  double ks_lo = 0.0, ks_hi = 0.0;
  double ks_fitted = 0.0;  // against the Gaussian with the empirical variance

  double variance_ratio() const { return n_var.value / predicted.sigma2; }
};

CltReport clt_report(const Eigen::VectorXd& values, int N, double t, double mean_field, const CltVariance& predicted,
                     std::uint64_t seed);

// Runs the ensemble and the PDE and compares. plan.record_times must contain t.
CltReport clt_experiment(const Observable& phi, const ReplicaPlan& plan, const ModelSpec& spec, const GridSpec& pde,
                         double t);

// ---- weak error ----

struct WeakErrorPrediction {
  double c1 = 0.0;
  double c1_initial = 0.0;
  double c1_ito = 0.0;
  double uncertainty = 0.0;  // mollifier sensitivity
  double c1_coarse = 0.0;    // value at the base mollifier width
  double c1_fine = 0.0;      // value at half that width
};

// Leading 1/N coefficient of E<phi, mu^N_t> - <phi, mu_t> for Overdamped spatial grids. The
// fluctuation covariance is propagated with the tangent of the path; initial and noise parts are
// tracked separately. Both Dirac sources are mollified with width w and w/2 cells and the two
// values are Richardson-combined.
WeakErrorPrediction weak_error_predict(const Eigen::VectorXd& phi, const MeanFieldPath& path, double t,
                                       double width = 3.0);

// Initial-sampling part from the second-order linear-derivative flow on the diagonal,
// 1/2 sum_z mu(z) dx <phi, m^(2)(t, mu, z, z)>.
double weak_error_initial_mk(const Eigen::VectorXd& phi, const MeanFieldPath& path, double t, double width = 3.0);

// N -> infinity limit of the Euler-Maruyama particle scheme (torus, Overdamped) on the grid of
// mu0, after `steps` steps of size dt.
Eigen::VectorXd em_mean_field(const GridDensity& mu0, const ModelSpec& spec, double dt, int steps);

// Real Fourier coefficients (a_0, a_1, b_1, ..., a_K, b_K) of a torus grid function.
Eigen::VectorXd fourier_truncate(const Eigen::VectorXd& f, const GridSpec& grid, int K);

// Martingale control variate for torus Overdamped EM runs. psi[n] holds the truncated Fourier
// coefficients of the test function at particle step n (n = 0..steps, psi[steps] ~ phi). The
// accumulator returns the sum over steps of the compensated increments of <psi_n, mu^N_n>, plus
// the initial term <psi_0, mu^N_0> - initial_mean.
AccumulatorFactory martingale_control(std::vector<Eigen::VectorXd> psi, double period, double dt,
                                      double initial_mean);

struct WeakErrorPoint {
  int N = 0;
  int R = 0;
  Estimate mean;
  double reference = 0.0;
  Estimate bias;
  double variance_reduction = 1.0;
};

struct WeakErrorFit {
  std::vector<WeakErrorPoint> points;
  SlopeFit slope;    // log |bias| on log N
  Estimate c1, c2;   // bias = c1 / N + c2 / N^2
  SlopeFit romberg;  // log |2 bias(2N) - bias(N)| on log N
  bool bias_detected = false;
};

struct WeakErrorConfig {
  std::vector<int> Ns;
  std::vector<int> Rs;
  double t = 2.0;
  int pde_G = 64;
  double pde_dt = 2e-3;
  int cv_modes = 8;
  bool control_variate = true;
};

WeakErrorFit weak_error_fit(const Observable& phi, const ModelSpec& spec, const ReplicaPlan& base,
                            const WeakErrorConfig& cfg);

// Fit on given points (exposed for tests).
WeakErrorFit fit_weak_error(std::vector<WeakErrorPoint> points);

// ---- correlation scaling ----

struct ScalingPoint {
  int N = 0;
  double t = 0.0;
  Estimate pairing;
};

struct ScalingReport {
  std::string observable;
  int m = 2;
  std::vector<ScalingPoint> points;
  SlopeFit slope;
  std::vector<int> Ns;
  std::vector<double> uniformity;  // per N: max / median over t > 0 of N^{m-1} |pairing|
};

// Powers phi, phi^2, ..., phi^m as observables.
std::vector<Observable> power_observables(const Observable& phi, int m);

// Top pairing int phi^{(x)m} G^{m,N} at every record time t > 0 from a run over
// power_observables(phi, m).
std::vector<ScalingPoint> estimate_pairings(const ObservableSeries& s, int N, int m, int jackknife_blocks = 50);

ScalingReport scaling_report(const std::string& name, int m, const std::vector<ScalingPoint>& points);

ScalingReport correlation_scaling(const Observable& phi, const ModelSpec& spec, const ReplicaPlan& base, int m,
                                  const std::vector<int>& Ns, const std::vector<int>& Rs);

// ---- concentration ----

struct TailPoint {
  int N = 0;
  double t = 0.0;
  double r = 0.0;
  double prob = 0.0;
  int count = 0;
  double c_hat = 0.0;  // N r^2 / (2 ||phi||^2 (-log prob))
};

struct ConcentrationReport {
  double w3_norm = 0.0;
  double sup_norm = 0.0;
  std::vector<TailPoint> points;
  // smallest constant valid at every sampled point of the (N, t) cell
  std::vector<int> Ns;
  std::vector<double> times;
  Eigen::MatrixXd c_hat;  // Ns x times
  double c_overall = 0.0;
  double stability = 0.0;  // max / min of c_hat over cells
};

// ||phi||_{W^{3,inf}} proxy: max of sup |phi^(k)|, k <= 3, over [lo, hi] by sampling.
double w3_norm(const std::function<double(double)>& phi, double lo, double hi, double h = 1e-3);

// Upper tails P(<phi, mu^N_t> - mean >= r) at r = z * sd for each z; tails with fewer than
// min_count exceedances are dropped.
std::vector<TailPoint> tail_points(const Eigen::VectorXd& values, int N, double t, const std::vector<double>& z,
                                   double phi_norm, int min_count = 20);

ConcentrationReport concentration_report(const std::vector<TailPoint>& points, double phi_norm, double sup_norm);

}  // namespace chaoslab

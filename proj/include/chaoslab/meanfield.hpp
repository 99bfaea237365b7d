#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "chaoslab/grid.hpp"
#include "chaoslab/model.hpp"

namespace chaoslab {

// Derivative matrices acting on grid functions. Torus: Fourier spectral. Line and velocity axes:
// 8th-order finite differences on cell centres, one-sided near the ends.
Eigen::MatrixXd spectral_derivative(int G, double L, int order);
Eigen::MatrixXd fd_derivative(int G, double h, int order);

// Discretized mean-field dynamics d mu/dt = F(mu) on a GridSpec.
//
// The generator L_mu acting on test functions is discretized directly; every forward operator is
// its exact matrix transpose, so <F(mu), g> = <mu, L_mu g> holds to round-off and mass is
// conserved exactly. Kinetic grids store values x-major (index i * G_v + j).
class MeanFieldOperator {
 public:
  MeanFieldOperator(const ModelSpec& spec, const GridSpec& grid);

  const ModelSpec& spec() const { return spec_; }
  const GridSpec& grid() const { return grid_; }
  int size() const { return grid_.size(); }
  bool kinetic() const { return grid_.kinetic(); }

  Eigen::VectorXd rhs(const Eigen::VectorXd& mu) const;
  // J(mu) h, the linearized operator including the nonlocal interaction term.
  Eigen::VectorXd apply(const Eigen::VectorXd& mu, const Eigen::VectorXd& h) const;
  // J(mu)^T g.
  Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& mu, const Eigen::VectorXd& g) const;
  // F''[h, k] (F is quadratic, so this does not depend on mu).
  Eigen::VectorXd second(const Eigen::VectorXd& h, const Eigen::VectorXd& k) const;
  // sigma_0^T grad g: d/dx for Overdamped, d/dv for kinetic grids.
  Eigen::VectorXd noise_grad(const Eigen::VectorXd& g) const;
  // Dense J(mu); Overdamped only.
  Eigen::MatrixXd linear_matrix(const Eigen::VectorXd& mu) const;

  // Spectral radius estimate of J(mu) and the largest RK4-stable step derived from it.
  double spectral_radius(const Eigen::VectorXd& mu) const;
  double stable_dt(const Eigen::VectorXd& mu) const;

  // kappa (W' * rho)(x_i) from the spatial marginal rho.
  Eigen::VectorXd mean_force(const Eigen::VectorXd& rho) const;
  Eigen::VectorXd marginal(const Eigen::VectorXd& mu) const;

  const Eigen::MatrixXd& D1() const { return d1_; }
  const Eigen::MatrixXd& D2() const { return d2_; }
  // K'_{ij} = W'(x_i - x_j) dx.
  const Eigen::MatrixXd& kernel() const { return kp_; }
  const Eigen::VectorXd& confinement_force() const { return dA_; }

 private:
  ModelSpec spec_;
  GridSpec grid_;
  Eigen::MatrixXd d1_, d2_, df1_, df2_;  // df1 = -d1^T, df2 = d2^T
  Eigen::MatrixXd dv_, dv2_;             // velocity axis, kinetic only
  Eigen::MatrixXd kp_;
  Eigen::VectorXd dA_, v_;
};

class CflError : public std::invalid_argument {
 public:
  CflError(const std::string& what, double suggested) : std::invalid_argument(what), suggested_dt(suggested) {}
  double suggested_dt;
};

// Nonlinear RK4 trajectory with every step cached, plus the exact tangent and adjoint of each step.
class MeanFieldPath {
 public:
  MeanFieldPath(std::shared_ptr<const MeanFieldOperator> op, const Eigen::VectorXd& mu0, double T);

  const MeanFieldOperator& op() const { return *op_; }
  std::shared_ptr<const MeanFieldOperator> op_ptr() const { return op_; }
  int steps() const { return static_cast<int>(states_.size()) - 1; }
  double dt() const { return dt_; }
  double T() const { return dt_ * steps(); }
  // Step index of time t; throws unless t is a multiple of dt in [0, T].
  int index(double t) const;
  const Eigen::VectorXd& state(int n) const { return states_[n]; }
  GridDensity density(int n) const;

  // h_n -> h_{n+1} under the tangent of step n.
  Eigen::VectorXd tangent_step(int n, const Eigen::VectorXd& h) const;
  // g_{n+1} -> g_n, the transpose of tangent_step.
  Eigen::VectorXd adjoint_step(int n, const Eigen::VectorXd& g) const;
  // Dense tangent matrix of step n; Overdamped only.
  Eigen::MatrixXd tangent_matrix(int n) const;
  // Second-order tangent: advances the pair of first-order directions and the second variation
  // hh in place.
  void second_step(int n, Eigen::VectorXd& h1, Eigen::VectorXd& h2, Eigen::VectorXd& hh) const;

 private:
  std::shared_ptr<const MeanFieldOperator> op_;
  double dt_;
  std::vector<Eigen::VectorXd> states_;

  void stages(int n, Eigen::VectorXd y[4]) const;
};

MeanFieldPath solve_path(const GridDensity& mu0, const ModelSpec& spec, double T);

// Densities at the requested times (snapped to the step grid).
std::vector<GridDensity> mckean_vlasov_solve(const GridDensity& mu0, const ModelSpec& spec, const GridSpec& grid,
                                             double T, const std::vector<double>& record_times);

// L_mu h. Throws if h has nonzero mass.
GridDensity linearized_apply(const GridDensity& h, const GridDensity& mu, const ModelSpec& spec);

// U_{t,s}[f] along the cached path.
GridDensity linearized_flow(const GridDensity& f, const MeanFieldPath& path, double s, double t);
// U*_{t,s}[g].
Eigen::VectorXd dual_flow(const Eigen::VectorXd& g, const MeanFieldPath& path, double t, double s);
// psi_n = U*_{t, t_n}[g] for every step n <= index(t).
std::vector<Eigen::VectorXd> dual_series(const Eigen::VectorXd& g, const MeanFieldPath& path, double t);

// Mollified Dirac mass at grid node `node`: Fejer kernel on the torus, hat on the line. Width in
// cells. Spatial grids only.
Eigen::VectorXd mollified_dirac(const GridSpec& grid, int node, double width);

struct LinearDerivativeField {
  std::vector<int> anchors;
  std::vector<double> times;
  double width = 3.0;
  // m1[a][r] = m^(1)(times[r], mu, y_a).
  std::vector<std::vector<Eigen::VectorXd>> m1;
  // m2[p][r] for the anchor pairs in `pairs` (indices into `anchors`).
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::vector<Eigen::VectorXd>> m2;
};

// First-order field for every anchor node.
LinearDerivativeField mk_flow1(const MeanFieldPath& path, const std::vector<int>& anchors,
                               const std::vector<double>& times, double width = 3.0);
// Adds m^(2)(t, mu, y_a, y_b) for the given pairs. Needs the first-order field of y_b.
void mk_flow2(const MeanFieldPath& path, LinearDerivativeField& field, const std::vector<std::pair<int, int>>& pairs);

enum class DecayNorm { SpectralNegSobolev, Hermite };

struct DecayFit {
  double rate = 0.0;
  double ci = 0.0;  // 95% half-width from the regression
  bool unstable = false;
  std::vector<double> times;
  std::vector<double> norms;
};

// ||f||_{H^-k} on the torus; kinetic grids use an L2 sum over velocity rows.
double negative_sobolev_norm(const GridSpec& grid, const Eigen::VectorXd& f, int k);
// sup over 16 Hermite functions (scaled by sigma, sup-normalized) of |<f, h_j>|.
double hermite_norm(const GridSpec& grid, const Eigen::VectorXd& f, double sigma);

// Evolves f0 along the path and fits log ||f_t|| linearly over [T/2, T].
DecayFit decay_rate(const GridDensity& f0, const MeanFieldPath& path, int samples = 64, int sobolev_k = 1,
                    double hermite_sigma = 1.0);

}  // namespace chaoslab

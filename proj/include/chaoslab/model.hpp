#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace chaoslab {

enum class Dynamics { Langevin, Overdamped };
enum class Geometry { Torus, Line };

std::string to_string(Dynamics d);
std::string to_string(Geometry g);
Dynamics parse_dynamics(const std::string& s);
Geometry parse_geometry(const std::string& s);

// Even pair potential W. `period` > 0 makes W periodic (torus); 0 means the real line.
struct PotentialSpec {
  enum class Family { CosineSum, GaussianBump, Tabulated };

  Family family = Family::CosineSum;
  std::vector<double> params;
  double period = 0.0;

  // W(x) = sum_n w_n cos(n k0 x), n = 1..K, with k0 = 2 pi / period (k0 = 1 on the line).
  static PotentialSpec cosine_sum(std::vector<double> w, double period);
  // W(x) = amplitude exp(-x^2 / (2 width^2)), summed over periodic images on the torus.
  static PotentialSpec gaussian_bump(double amplitude, double width, double period);
  // Torus: values at x_i = i period / n, periodic cubic spline.
  // Line: params = {H, v_0..v_{n-1}} with nodes spread evenly over [-H, H], natural spline,
  // held constant outside.
  static PotentialSpec tabulated(std::vector<double> params, double period);

  double W(double x) const;
  double dW(double x) const;
  // (1/period) * integral of W(x) exp(-2 pi i n x / period); real because W is even.
  double fourier(int n) const;
  double sup_abs() const;
  bool h_stable() const;
  std::string family_name() const;

  // Spline coefficients, filled by the factories for the Tabulated family.
  std::vector<double> spline_m;  // second derivatives at nodes
};

std::string to_string(PotentialSpec::Family f);
PotentialSpec::Family parse_family(const std::string& s);

struct ModelSpec {
  Dynamics dynamics = Dynamics::Overdamped;
  Geometry geometry = Geometry::Torus;
  double period = 2.0 * 3.14159265358979323846;
  int dim = 1;
  double kappa = 0.0;
  double beta = 2.0;
  double a = 0.0;
  PotentialSpec interaction = PotentialSpec::cosine_sum({1.0}, 2.0 * 3.14159265358979323846);

  // Throws std::invalid_argument on inconsistent parameters.
  void validate() const;

  // Confinement. Line: a x^2 / 2. Torus: a (L/2pi)^2 (1 - cos(2pi x/L)), which matches the
  // quadratic near 0 and keeps A periodic.
  double A(double x) const;
  double dA(double x) const;

  // Phase-space coordinates per particle: dim (Overdamped) or 2 dim (Langevin).
  int phase_dim() const { return dynamics == Dynamics::Langevin ? 2 * dim : dim; }
  // Noise acts on velocities only for Langevin, on all coordinates for Overdamped.
  int noise_dim() const { return dim; }

  bool gibbs_contractive() const;
  double wrap(double x) const;
};

// Defaults: beta = 1 for Langevin and 2 for Overdamped.
ModelSpec make_model(Dynamics d, Geometry g, double kappa, double a, PotentialSpec w,
                     double period = 2.0 * 3.14159265358979323846, double beta = -1.0);

// Anything that can answer (grad W * mu)(x).
class MeasureHandle {
 public:
  virtual ~MeasureHandle() = default;
  virtual double grad_conv(double x, const PotentialSpec& w) const = 0;
};

class PointMeasure : public MeasureHandle {
 public:
  PointMeasure(std::vector<double> x, std::vector<double> weights);
  explicit PointMeasure(std::vector<double> x);
  double grad_conv(double x, const PotentialSpec& w) const override;

 private:
  std::vector<double> x_;
  std::vector<double> w_;
};

// b(z, mu). z = (x) for Overdamped, (x, v) for Langevin.
Eigen::VectorXd drift(const Eigen::VectorXd& z, const MeasureHandle& mu, const ModelSpec& spec);

struct GridSpec;
struct GridDensity;

// Self-consistent Gibbs state M = c exp(-beta (|v|^2/2 + A + kappa W * M_x)) by damped fixed-point
// iteration. The velocity factor is present only for kinetic grids. Refuses unless
// kappa beta sup|W| < 1.
GridDensity gibbs_steady_state(const ModelSpec& spec, const GridSpec& grid, double tol = 1e-12,
                               int max_iter = 20000);

// sup-norm fixed-point residual of a candidate Gibbs state.
double gibbs_residual(const ModelSpec& spec, const GridDensity& m);

}  // namespace chaoslab

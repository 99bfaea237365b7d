#pragma once

#include <Eigen/Dense>

#include "chaoslab/model.hpp"

namespace chaoslab {

// Torus nodes are x_i = i L / G. Line nodes are cell centres of [x_min, x_max].
// Kinetic grids add G_v velocity cell centres on [-v_max, v_max]; storage is x-major
// (index i * G_v + j).
struct GridSpec {
  Geometry geometry = Geometry::Torus;
  int G = 64;
  double x_min = 0.0;
  double x_max = 2.0 * 3.14159265358979323846;
  int G_v = 0;
  double v_max = 0.0;
  double dt_pde = 1e-3;

  static GridSpec torus(double L, int G, double dt_pde);
  static GridSpec line(double X, int G, double dt_pde);
  GridSpec with_velocity(int G_v, double v_max) const;

  bool kinetic() const { return G_v > 0; }
  int size() const { return kinetic() ? G * G_v : G; }
  double length() const { return x_max - x_min; }
  double dx() const { return length() / G; }
  double dv() const { return kinetic() ? 2.0 * v_max / G_v : 1.0; }
  double cell() const { return dx() * dv(); }
  Eigen::VectorXd x_nodes() const;
  Eigen::VectorXd v_nodes() const;

  void validate(const ModelSpec& spec) const;
};

// Half-width X of the line box for a centred Gaussian with standard deviation sigma; the mass
// outside [-X, X] is far below 1e-12.
double line_box_halfwidth(double sigma);

struct GridDensity {
  Eigen::VectorXd values;
  GridSpec grid;
  bool is_signed = false;

  double mass() const { return values.sum() * grid.cell(); }
  // Spatial marginal (identity on 1-D grids).
  Eigen::VectorXd marginal() const;
  // Throws if the sign or mass contract is violated beyond tolerance.
  void check(double tol = 1e-10) const;
};

// Trapezoid-type pairing sum_i f_i g_i * cell.
double integrate(const GridSpec& grid, const Eigen::VectorXd& f);

class GridMeasure : public MeasureHandle {
 public:
  GridMeasure(Eigen::VectorXd x, Eigen::VectorXd rho, double dx);
  double grad_conv(double x, const PotentialSpec& w) const override;

 private:
  Eigen::VectorXd x_;
  Eigen::VectorXd rho_;
  double dx_;
};

}  // namespace chaoslab

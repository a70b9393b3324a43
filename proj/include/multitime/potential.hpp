#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "multitime/errors.hpp"
#include "multitime/field.hpp"
#include "multitime/operator.hpp"
#include "multitime/polynomial.hpp"

namespace multitime {

// One spacetime configuration of N particles: row j = (t_j, x_j),
// so the matrix is n_particles x (1 + space_dim).
using Configuration = Eigen::MatrixXd;

// Per-particle potential terms V_j(x_1,...,x_N), scalar or matrix valued.
// Matrix values act on particle j's spin space and must be Hermitian.
class PotentialField {
 public:
  using ScalarEval = std::function<double(int, const Configuration&)>;
  using MatrixEval = std::function<Operator(int, const Configuration&)>;

  static PotentialField scalar(int n_particles, int space_dim, ScalarEval eval);
  static PotentialField matrix(int n_particles, int space_dim,
                               std::vector<int> spin_dims, MatrixEval eval);

  int n_particles() const { return n_particles_; }
  int space_dim() const { return space_dim_; }
  bool is_matrix() const { return matrix_valued_; }
  const std::vector<int>& spin_dims() const { return spin_dims_; }

  // Both evaluators shape-check the configuration; the matrix one also
  // enforces Hermiticity of the value within 1e-10.
  double eval_scalar(int j, const Configuration& x) const;
  Operator eval_matrix(int j, const Configuration& x) const;

 private:
  PotentialField() = default;
  int n_particles_ = 0;
  int space_dim_ = 0;
  bool matrix_valued_ = false;
  std::vector<int> spin_dims_;
  ScalarEval scalar_eval_;
  MatrixEval matrix_eval_;
};

// Factories mirroring the potential kinds accepted in config files.

// V_j = (charge/2) * sum_{i != j} 1/|x_j - x_i|. Singular at coincidence.
PotentialField make_coulomb_split_potential(double charge, int n_particles = 2,
                                            int space_dim = 3);

// V_j = (amplitude/2) * sum_{i != j} exp(-|x_j - x_i|^2 / (2 width^2)).
PotentialField make_gaussian_pair_potential(double amplitude, double width,
                                            int n_particles = 2,
                                            int space_dim = 3);

// V_j = P_j(t_j, x_j), one polynomial in 1 + space_dim variables per particle.
PotentialField make_external_potential(std::vector<Polynomial> per_particle,
                                       int space_dim);

// V_j = dg/dt_j (t_1,...,t_N) + u_j(t_j, x_j); g is a polynomial in the N
// times, u_j polynomials as in make_external_potential.
PotentialField make_gradient_gauge_potential(const Polynomial& g,
                                             std::vector<Polynomial> externals,
                                             int space_dim);

// Random configurations with all pairwise distances >= min_separation
// (violating draws are redrawn and counted). Times uniform in [-1,1],
// positions uniform in [-half_width, half_width]^d.
struct SampleSet {
  std::vector<Configuration> configs;
  int n_rejected = 0;
};
SampleSet make_random_configurations(int n_samples, int n_particles,
                                     int space_dim, unsigned long seed,
                                     double min_separation = 1e-2,
                                     double half_width = 2.0);

// Cross-dependence residuals for scalar fields, by centered differences:
//   r1 = |dV_j/dt_i - dV_i/dt_j|,  r2 = max_a |dV_j/dx_{i,a}|  (i != j).
// Samples where any stencil evaluation is non-finite are excluded from the
// aggregate and listed in `excluded`.
struct RelationRow {
  int sample;
  int i;
  int j;
  double r1;
  double r2;
};
struct RelationReport {
  std::vector<RelationRow> rows;
  std::vector<int> excluded;
  double max_r1 = 0.0;
  double max_r2 = 0.0;
};
RelationReport relation_residuals(const PotentialField& v,
                                  const std::vector<Configuration>& samples,
                                  double fd_step);

// Hermitian matrix basis per particle, evaluated at that particle's
// spacetime point. Size must be spin_dim^2; the first 1 + space_dim entries
// are, in order, the identity and the kinetic matrices, unscaled.
struct MatrixBasisSet {
  std::function<std::vector<Operator>(int, const Eigen::VectorXd&)> eval;
};

// Standard basis: {I, sigma_1; sigma_2, sigma_3} for spin dim 2 in 1D,
// {I, alpha_1..3, orthonormal completion} for spin dim 4 in 3D, and
// {I, sigma_1..3} for spin dim 2 in 3D.
MatrixBasisSet make_standard_matrix_basis(const PotentialField& v);

// Residuals of the coefficient relations for matrix fields. Coefficients
// d_{j,.} are extracted at each sample by Hilbert-Schmidt least squares
// against the basis. With b = 1 + space_dim (identity + kinetic block):
//   cross = max |d d_{j,alpha} / d x_{i,mu}|   over alpha >= b, mu < b
//   curl  = max |d d_{j,mu} / d x_{i,nu} - d d_{i,nu} / d x_{j,mu}|,
//           mu, nu < b
// for ordered pairs i != j. A Gram condition number above 1e8 at any sample
// point is an invalid-input error naming the particle and the point.
struct MatrixRelationRow {
  int sample;
  int i;
  int j;
  double cross;
  double curl;
};
struct MatrixRelationReport {
  std::vector<MatrixRelationRow> rows;
  std::vector<int> excluded;
  double max_cross = 0.0;
  double max_curl = 0.0;
};
MatrixRelationReport matrix_relation_residuals(
    const PotentialField& v, const MatrixBasisSet& basis,
    const std::vector<Configuration>& samples, double fd_step);

// Line integral of sum_j w(j, t) dt_j along the polyline through `vertices`,
// trapezoid rule with `steps` subintervals per segment.
double staircase_integral(const std::function<double(int, const TimePoint&)>& w,
                          const std::vector<TimePoint>& vertices, int steps);

struct TimeBox {
  TimePoint lo;
  TimePoint hi;
};

// Result of splitting V_j = v_tilde_j(t_j, x_j) + d theta / d t_j:
//   theta     phase over time tuples, normalized to theta(0) = 0
//   v_tilde   per-particle potential, evaluated at (t_j, x_j)
//   w         the interaction remainder W_j = V_j - v_tilde_j, a function of
//             the times alone when the split is valid
//   residual  max |d theta / d t_j - W_j| over the verification grid
//   vtilde_x_spread, w_x_spread
//             observed dependence of v_tilde_j on other particles' positions
//             and of W_j on any position, over the spatial probe set
struct GaugeDecomposition {
  std::function<double(const TimePoint&)> theta;
  std::function<double(int, const Eigen::VectorXd&)> v_tilde;
  std::function<double(int, const TimePoint&)> w;
  double residual = 0.0;
  double vtilde_x_spread = 0.0;
  double w_x_spread = 0.0;
};

// Constructive split of a scalar field whose relation residuals are <= tol.
// theta is the trapezoid staircase integral of W along axis order, taken
// from the origin; the split is tabulated and verified on grid_n points per
// axis over `box`. Spatial dependence of v_tilde (on other particles) or of
// W (on anything) beyond 10*tol raises inconsistent_input_error.
GaugeDecomposition gauge_decompose(const PotentialField& v, const TimeBox& box,
                                   int grid_n, double tol,
                                   int spatial_samples = 8,
                                   unsigned long seed = 1);

}  // namespace multitime

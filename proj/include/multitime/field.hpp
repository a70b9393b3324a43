#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "multitime/operator.hpp"
#include "multitime/polynomial.hpp"

namespace multitime {

using TimePoint = Eigen::VectorXd;  // one coordinate per time variable

// A family of generators, one per time variable, each a dim x dim
// operator-valued function of the whole time tuple.
class HamiltonianField {
  public:
    HamiltonianField() = default;
    HamiltonianField(int n_times, int dim,
                     std::function<Operator(int, const TimePoint&)> eval,
                     bool expect_hermitian = true);

    int n_times() const { return n_times_; }
    int dim() const { return dim_; }
    bool expect_hermitian() const { return expect_hermitian_; }

    // H_j at the time tuple t; j is 0-based. Shape-checked.
    Operator eval(int j, const TimePoint& t) const;

    // Samples every generator at the given points and throws
    // invalid_input_error if any deviates from Hermitian by more than
    // tol in operator norm.
    void validate_hermitian(const std::vector<TimePoint>& points, double tol = 1e-10) const;

  private:
    int n_times_ = 0;
    int dim_ = 0;
    bool expect_hermitian_ = true;
    std::function<Operator(int, const TimePoint&)> eval_;
};

// Constant commuting diagonal generators (deterministic in the seed).
HamiltonianField make_commuting_diagonal_field(int n_times, int dim, unsigned seed);

// H_1 = pauli_x, H_2 = pauli_z; constant and non-commuting.
HamiltonianField make_pauli_pair_field();

// H_j = (dg/dt_j)(t) * A for a scalar polynomial g: gradient fields are
// curvature-free since mixed partials of g coincide and [A, A] = 0.
HamiltonianField make_gradient_scalar_field(const Polynomial& g, const Operator& a);

// Generators tabulated on a regular grid over a box, with multilinear
// interpolation between nodes. Evaluation outside the box is an error.
struct TabulatedField {
    int n_times = 0;
    int dim = 0;
    Eigen::VectorXd lo, hi;              // box corners, size n_times
    std::vector<int> shape;              // nodes per axis, each >= 2
    std::vector<std::vector<Operator>> values;  // [j][flat node index]
};
HamiltonianField make_tabulated_field(TabulatedField data);

// Samples an existing field onto a regular grid (useful to build
// tabulated fixtures and configs).
TabulatedField tabulate_field(const HamiltonianField& field, const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi, const std::vector<int>& shape);

// Piecewise-linear path through time space; steps[i] integration steps
// on segment i.
struct TimePath {
    std::vector<TimePoint> vertices;
    std::vector<int> steps;

    void validate(int n_times) const;
    bool is_closed(double tol = 0.0) const;
    // Every segment moves along at most one coordinate axis.
    bool is_axiparallel(double tol = 0.0) const;
};

// Two-segment axis staircase start -> (end[axis_first] spliced) -> end.
TimePath make_staircase(const TimePoint& start, const TimePoint& end, int axis_first,
                        int steps_per_segment);

// Monotone random staircase between two points: axis moves in random
// interleaved chunks. Deterministic in the seed.
TimePath make_random_staircase(const TimePoint& start, const TimePoint& end, int n_corners,
                               int steps_per_segment, unsigned seed);

// Smooth surface patch f: [0,1]^2 -> time space. jacobian may be null,
// in which case centered differences with fd_step are used.
struct SurfacePatch {
    int n_times = 0;
    std::function<TimePoint(double, double)> f;
    std::function<void(double, double, TimePoint&, TimePoint&)> jacobian;  // optional: (df/ds, df/dt)
    double fd_step = 1e-6;
};

// f(s,t) = origin + s*edge_s + t*edge_t, with exact Jacobian.
SurfacePatch make_affine_patch(const TimePoint& origin, const TimePoint& edge_s,
                               const TimePoint& edge_t);

}  // namespace multitime

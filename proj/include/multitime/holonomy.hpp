#pragma once

#include <functional>
#include <vector>

#include "multitime/field.hpp"
#include "multitime/operator.hpp"

namespace multitime {

// Pairwise flatness data at one time tuple. Two scalings of the same
// obstruction are exposed:
//   R_jk = [H_j,H_k] - i dH_k/dt_j + i dH_j/dt_k   (zero iff the joint
//          evolution problem is locally solvable)
//   F_jk = -dH_k/dt_j + dH_j/dt_k - i [H_j,H_k]    (curvature two-form
//          coefficient; R_jk = i F_jk)
// Time derivatives are centered differences with step fd_step.
struct CurvatureReport {
    int n_times = 0;
    std::vector<Operator> R;  // row-major over (j,k), j,k in [0,n)
    std::vector<Operator> F;
    double max_R_norm = 0.0;
    int worst_j = -1, worst_k = -1;

    const Operator& r(int j, int k) const { return R[static_cast<std::size_t>(j) * n_times + k]; }
    const Operator& f(int j, int k) const { return F[static_cast<std::size_t>(j) * n_times + k]; }
};

CurvatureReport consistency_residual(const HamiltonianField& field, const TimePoint& t,
                                     double fd_step = 1e-4);

// Ordered product of per-step exponentials along a piecewise-linear
// path, generators sampled at segment-step midpoints:
//   U = prod exp(-i sum_j H_j(mid) * dgamma_j),  later steps to the left.
// A path with no segments (or all zero-length) yields the identity.
// Unitary whenever the field is Hermitian, for any step count.
Operator path_ordered_exp(const HamiltonianField& field, const TimePath& path);

// Third-order truncation of the same ordered product (series cross-check
// for small ||H||*T; not a propagator).
Operator dyson_third_order(const HamiltonianField& field, const TimePath& path);

// Axis rectangle at corner t0 spanning dt along axes j then k.
// westnorth: up axis k first, then across axis j (both at the far edge);
// southeast: across axis j first, then up axis k.
// difference = U_westnorth - U_southeast, which for small dt approaches
// (-[H_j,H_k] - i dH_j/dt_k + i dH_k/dt_j) * dt^2.
struct RectangleHolonomy {
    Operator u_westnorth;
    Operator u_southeast;
    Operator difference;      // u_westnorth - u_southeast
    Operator loop_minus_identity;  // inverse(u_westnorth)*u_southeast - I
};

RectangleHolonomy rectangle_holonomy(const HamiltonianField& field, const TimePoint& corner,
                                     int axis_j, int axis_k, double dt, int steps_per_edge = 1);

// Operator-norm distance between the transports of two paths sharing
// both endpoints. Mismatched endpoints are rejected.
double path_independence_gap(const HamiltonianField& field, const TimePath& a,
                             const TimePath& b);

// Ordered double product over a meshed surface patch: per cell,
//   exp(+i * Fhat(s,t) * (df/ds . , . df/dt) ds dt)
// where Fhat is the curvature two-form parallel-transported to the
// patch base point (0,0) through (s,0). Cells are ordered so factors
// with larger s sit further right; ties in s are ordered by t.
Operator surface_ordered_exp(const HamiltonianField& field, const SurfacePatch& patch,
                             int mesh, double fd_step = 1e-4);

// Boundary transport of the patch (counterclockwise from f(0,0)),
// sampled with mesh segments per edge.
Operator patch_boundary_transport(const HamiltonianField& field, const SurfacePatch& patch,
                                  int mesh);

struct StokesReport {
    Operator boundary;
    Operator surface;
    double gap = 0.0;  // operator norm of the difference
};

StokesReport stokes_compare(const HamiltonianField& field, const SurfacePatch& patch, int mesh,
                            double fd_step = 1e-4);

// phi(end) = U_path * phi0.
Vector multitime_solve(const HamiltonianField& field, const TimePath& path, const Vector& phi0);

// Nonlinear flatness residual for first-order systems
// d(phi)/dt_j = f_j(t, phi): per pair,
//   res_jk = || df_j/dt_k + (D_phi f_j)[f_k] - df_k/dt_j - (D_phi f_k)[f_j] ||
// with centered time differences (fd_step) and centered directional
// derivatives (dir_step scaled by state/direction size); no full
// Jacobians are formed.
struct FrobeniusReport {
    int n_pairs = 0;
    std::vector<double> pair_norms;  // over j<k, lexicographic
    double max_norm = 0.0;
};

using StateFlow = std::function<Vector(const TimePoint&, const Vector&)>;

FrobeniusReport frobenius_residual(const std::vector<StateFlow>& flows, const TimePoint& t,
                                   const Vector& phi, double fd_step = 1e-4,
                                   double dir_step = 1e-5);

}  // namespace multitime

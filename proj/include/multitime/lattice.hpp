#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "multitime/operator.hpp"

namespace multitime {

enum class Boundary { periodic, zero_padded };

// Uniform cubic lattice, shared by every particle of a GridFunction.
// The coordinate of cell index i along any axis is origin + i·spacing.
struct Grid {
    int space_dim = 1;        // 1 or 3
    int points_per_axis = 8;  // ≥ 8
    double spacing = 1.0;     // > 0
    double origin = 0.0;      // coordinate of cell 0
    Boundary boundary = Boundary::zero_padded;

    double extent() const { return spacing * points_per_axis; }
    double coord(long cell) const { return origin + spacing * static_cast<double>(cell); }
    long cells() const;  // points_per_axis^space_dim
};

// Discretized multi-particle spinor field on a common grid. The flat
// value layout puts positions outside spins: particle 0's cell index is
// slowest, then the other particles' cells in order, then the spin
// indices in particle order (the last particle's spin is fastest).
// Within one particle's cell index, axis 0 is slowest (row-major).
class GridFunction {
  public:
    GridFunction(Grid grid, std::vector<int> spin_dims);

    const Grid& grid() const { return grid_; }
    int n_particles() const { return static_cast<int>(spin_dims_.size()); }
    const std::vector<int>& spin_dims() const { return spin_dims_; }

    Eigen::VectorXcd& values() { return values_; }
    const Eigen::VectorXcd& values() const { return values_; }
    long size() const { return values_.size(); }

    long cells_per_particle() const { return cells_; }
    long spin_total() const { return spin_total_; }

    // Flat cell index of one particle from its per-axis indices.
    long cell_of(const std::vector<int>& axis_indices) const;
    // Flat value index from per-particle cells and per-particle spins.
    long index(const std::vector<long>& cells, const std::vector<int>& spins) const;

    // Spatial position of one particle's cell (space_dim components).
    Eigen::VectorXd position(long cell) const;
    // All particle positions concatenated (space_dim·N components).
    Eigen::VectorXd positions(const std::vector<long>& cells) const;

    // L² norm with the lattice measure, spacing^(space_dim·N)·Σ|ψ|².
    double squared_norm() const;
    double norm() const;

  private:
    Grid grid_;
    std::vector<int> spin_dims_;
    long cells_ = 0;
    long spin_total_ = 0;
    Eigen::VectorXcd values_;
};

// Product of per-particle Gaussians exp(−‖x−c‖²/2w²) ⊗ spinor,
// normalized to unit lattice L² norm.
GridFunction make_gaussian_state(const Grid& grid,
                                 const std::vector<Eigen::VectorXd>& centers,
                                 const std::vector<double>& widths,
                                 const std::vector<Eigen::VectorXcd>& spinors);

// Product of per-particle plane waves exp(i k·x) ⊗ spinor, normalized.
// Wavevectors should be grid modes 2π·m/extent when the grid is periodic.
GridFunction make_plane_wave_state(const Grid& grid,
                                   const std::vector<Eigen::VectorXd>& wavevectors,
                                   const std::vector<Eigen::VectorXcd>& spinors);

// Product of one-cell pulses ⊗ spinor, normalized.
GridFunction make_delta_state(const Grid& grid,
                              const std::vector<std::vector<int>>& cells,
                              const std::vector<Eigen::VectorXcd>& spinors);

enum class HamiltonianKind { schrodinger, dirac, dirac1d };

// Multiplication operator evaluated at the concatenated positions of
// all particles (space_dim·N components).
using ScalarFieldFn = std::function<double(const Eigen::VectorXd&)>;
// Same, but spin-matrix valued on one particle's spin space.
using SpinMatrixFn = std::function<Operator(const Eigen::VectorXd&)>;

// One partial Hamiltonian H_j = H_j^free + V_j, acting on particle j's
// coordinates and spin only. The potential may still read every
// particle's position. At most one of the two potential slots may be
// set; spin-matrix values must be Hermitian.
struct PartialHamiltonianSpec {
    int particle = 0;
    HamiltonianKind kind = HamiltonianKind::dirac1d;
    double mass = 0.0;  // ≥ 0; > 0 for schrodinger
    int stencil_order = 2;
    ScalarFieldFn scalar_potential;
    SpinMatrixFn matrix_potential;
};

// (H_j^free + V_j)ψ with centered differences of the declared stencil
// order along particle j's axes, using the grid's boundary rule.
// schrodinger: −Δ_j/2m (identity on spin); dirac: −i α_j·∇_j + β_j m on
// a 4-spinor in 3D; dirac1d: −i σ₁ ∂_j + σ₃ m on a 2-spinor in 1D.
GridFunction apply_hamiltonian(const PartialHamiltonianSpec& spec, const GridFunction& psi);

// Centered first derivative along one axis of one particle with the
// same stencils and boundary rule as apply_hamiltonian; the building
// block for caller-supplied analytic commutator sides.
GridFunction apply_derivative(const GridFunction& psi, int particle, int axis,
                              int stencil_order);

// Relative residual r = ‖(H_a H_b − H_b H_a)ψ − Rψ‖/‖Rψ‖ of a claimed
// closed-form commutator R. When ‖Rψ‖ = 0 the residual is reported
// relative to ‖ψ‖ instead. support_margin > 0 (two-particle states
// only) requires ‖x₁−x₂‖ ≥ margin wherever |ψ| exceeds 10⁻⁴ of its
// peak (amplitude below that contributes ≤ 10⁻⁸ to any quadratic
// functional), rejecting states that touch a singular region.
double commutator_check(const PartialHamiltonianSpec& a, const PartialHamiltonianSpec& b,
                        const GridFunction& psi,
                        const std::function<GridFunction(const GridFunction&)>& analytic_rhs,
                        double support_margin = 0.0);

// First-order differential operator c₁(x₁,x₂)·∇₁ + c₂(x₁,x₂)·∇₂ on
// two-particle scalar states in 3D; the analytic side of a commutator.
struct PairFirstOrderOp {
    std::function<Eigen::Vector3d(const Eigen::Vector3d&, const Eigen::Vector3d&)> grad1;
    std::function<Eigen::Vector3d(const Eigen::Vector3d&, const Eigen::Vector3d&)> grad2;
};

struct SliceSpec {
    Eigen::Vector3d frozen_x2 = Eigen::Vector3d::Zero();  // particle 2's position
    double mass = 1.0;
    int stencil_order = 4;
    double support_margin = -1.0;  // < 0 selects 5·spacing
};

// Two-particle Schrödinger commutator residual on the slice
// {x₁ on grid} × {x₂ = frozen_x2}, for H_j = −Δ_j/2m + V(x₁,x₂) with a
// shared scalar potential and an analytic state ψ. Both H applications
// and the analytic right-hand side use the same centered stencils (x₂
// derivatives sample ψ at off-slice offsets of the same spacing).
// Returns ‖[H₁,H₂]ψ − Rψ‖/‖Rψ‖ over the slice.
double schrodinger_pair_commutator_slice(
    const Grid& grid, const SliceSpec& slice,
    const std::function<double(const Eigen::Vector3d&, const Eigen::Vector3d&)>& potential,
    const std::function<Complex(const Eigen::Vector3d&, const Eigen::Vector3d&)>& psi,
    const PairFirstOrderOp& analytic_rhs);

struct OrderGapResult {
    double gap = 0.0;         // ‖(e^{−iH_b t₂}e^{−iH_a t₁} − e^{−iH_a t₁}e^{−iH_b t₂})ψ₀‖
    double normalized = 0.0;  // gap/(t₁·t₂·‖[H_a,H_b]ψ₀‖), → 1 as t₁,t₂ → 0
    double commutator_norm = 0.0;
};

// Order-of-evolution gap for two dirac1d partial Hamiltonians under the
// characteristic-exact scheme. dt must equal the grid spacing and t₁,
// t₂ must be integer multiples of dt. Norm growth beyond 1% aborts as
// an integrator failure. When the denominator vanishes, normalized is 0
// for a zero gap and +inf otherwise.
OrderGapResult order_gap(const PartialHamiltonianSpec& a, const PartialHamiltonianSpec& b,
                         const GridFunction& psi0, double t1, double t2, double dt);

// Single-particle 1D Dirac evolution parameters. The potential is a
// function of the particle's own coordinate; at most one slot set, the
// matrix slot Hermitian 2×2.
struct Dirac1dOptions {
    double mass = 0.0;
    std::function<double(double)> scalar_potential;
    std::function<Operator(double)> matrix_potential;
};

// Evolves a 1-particle 1D 2-spinor by e^{−iHt}, H = −iσ₁∂ + σ₃m + V,
// with the characteristic scheme: per step of dt = spacing, a half
// rotation exp(−i dt/2 (σ₃m+V)), exact streaming of the σ₁ eigenmodes
// by one cell (the +1 mode moves right), and a second half rotation.
// Each step is unitary and spreads support by exactly one cell; t may
// be negative (inverse steps) and must be an integer multiple of the
// spacing. On a zero-padded grid, amplitude above 10⁻¹² of the initial
// peak reaching the boundary is an error: the light cone must stay
// inside the box. Smaller boundary amplitude is discarded with the pad.
GridFunction dirac1d_evolve(const GridFunction& psi0, double t,
                            const Dirac1dOptions& opt = {});

struct LightConeRow {
    long step = 0;
    double max_outside = 0.0;  // sup |ψ| strictly outside the cone
};

// Runs dirac1d_evolve step by step and reports, per step k, the largest
// amplitude outside the cone [support_lo − k, support_hi + k] of the
// declared initial support. With the characteristic scheme every row is
// exactly zero.
std::vector<LightConeRow> dirac1d_lightcone_scan(const GridFunction& psi0, double t,
                                                 const Dirac1dOptions& opt,
                                                 long support_lo, long support_hi);

// Translation-invariant pair interaction W(x_i − x_j) with range δ: the
// supplied profile is multiplied by a C² cutoff that is 1 on
// |r| ≤ δ − 2·spacing and exactly 0 on |r| ≥ δ. Values must be real
// (Hermitian multiplication operator); an imaginary part is rejected.
struct PairPotential {
    double range = 0.0;  // δ > 0
    std::function<Complex(double)> profile;
};

struct NParticleOptions {
    std::vector<double> masses;  // one per particle
    PairPotential pair;          // optional; unset profile means free
};

// Evolves the listed family of particles jointly by time t while every
// other particle's coordinate rides along as a parameter: the generator
// is Σ_{j∈family}(−iσ₁⁽ʲ⁾∂_j + σ₃⁽ʲ⁾m_j) plus the pair terms
// W(x_i − x_j) over ordered pairs with BOTH ends in the family.
// Characteristic scheme as in dirac1d_evolve (1D grids only); support
// spreads by exactly one cell per step per family particle.
GridFunction nparticle_dirac_evolve(const GridFunction& psi0, const std::vector<int>& family,
                                    double t, const NParticleOptions& opt);

// Snapshot format: one JSON header line {grid, particles, spin_dims,
// time_tuple} followed by the raw values as little-endian double pairs
// (re, im) in flat layout order.
void write_snapshot(const GridFunction& psi, const std::vector<double>& time_tuple,
                    const std::string& path);
GridFunction read_snapshot(const std::string& path, std::vector<double>* time_tuple = nullptr);

}  // namespace multitime

#include "multitime/lattice.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <utility>

namespace multitime {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Amplitude above this fraction of the peak counts as support, both for
// singularity margins and for the boundary-contact guard.
constexpr double kSupportFraction = 1e-4;
constexpr double kBoundaryFraction = 1e-12;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

std::string fmt_vec(const Eigen::VectorXd& v) {
    std::string s = "(";
    for (long i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += fmt(v[i]);
    }
    return s + ")";
}

void check_grid(const Grid& g) {
    if (g.space_dim != 1 && g.space_dim != 3)
        throw invalid_input_error("grid space_dim must be 1 or 3, got " +
                                  std::to_string(g.space_dim));
    if (g.points_per_axis < 8)
        throw invalid_input_error("grid needs at least 8 points per axis, got " +
                                  std::to_string(g.points_per_axis));
    if (!std::isfinite(g.spacing) || !(g.spacing > 0.0))
        throw invalid_input_error("grid spacing must be positive, got " + fmt(g.spacing));
    if (!std::isfinite(g.origin))
        throw invalid_input_error("grid origin must be finite");
}

// Flat-index geometry of a GridFunction: positions outside spins,
// particle 0 slowest on both sides.
struct Lay {
    int n = 0;
    int d = 1;
    long points = 0;
    long cells = 0;
    long spin_total = 1;
    long size = 0;
    std::vector<int> k;
    std::vector<long> spin_stride;
    std::vector<long> cell_stride;  // flat stride of one cell step of particle j
};

Lay lay_of(const GridFunction& f) {
    Lay L;
    L.n = f.n_particles();
    L.d = f.grid().space_dim;
    L.points = f.grid().points_per_axis;
    L.cells = f.cells_per_particle();
    L.spin_total = f.spin_total();
    L.size = f.size();
    L.k = f.spin_dims();
    L.spin_stride.assign(L.n, 1);
    for (int j = L.n - 2; j >= 0; --j) L.spin_stride[j] = L.spin_stride[j + 1] * L.k[j + 1];
    L.cell_stride.assign(L.n, L.spin_total);
    for (int j = L.n - 2; j >= 0; --j) L.cell_stride[j] = L.cell_stride[j + 1] * L.cells;
    return L;
}

long axis_stride(const Lay& L, int j, int a) {
    long s = L.cell_stride[j];
    for (int q = a + 1; q < L.d; ++q) s *= L.points;
    return s;
}

void split_cells(const Lay& L, long joint, std::vector<long>& cells) {
    for (int j = L.n - 1; j >= 0; --j) {
        cells[j] = joint % L.cells;
        joint /= L.cells;
    }
}

void fill_positions(const Lay& L, const Grid& g, const std::vector<long>& cells,
                    Eigen::VectorXd& pos) {
    for (int j = 0; j < L.n; ++j) {
        long c = cells[j];
        for (int a = L.d - 1; a >= 0; --a) {
            pos[j * L.d + a] = g.coord(c % L.points);
            c /= L.points;
        }
    }
}

// out[i] = Σ_w coef[w]·in[i + off[w]·stride] / denom along one axis,
// with the boundary rule (wrap or zero) applied to out-of-range taps.
void stencil_pass(const Eigen::VectorXcd& in, Eigen::VectorXcd& out, long size, long stride,
                  long npts, Boundary boundary, const double* coef, const int* off, int taps,
                  double denom) {
    const long block = stride * npts;
    const long lines = size / block;
    const double inv = 1.0 / denom;
    for (long line = 0; line < lines; ++line) {
        const long base0 = line * block;
        for (long inner = 0; inner < stride; ++inner) {
            const long base = base0 + inner;
            for (long i = 0; i < npts; ++i) {
                Complex acc(0.0, 0.0);
                for (int w = 0; w < taps; ++w) {
                    long q = i + off[w];
                    if (q < 0 || q >= npts) {
                        if (boundary == Boundary::periodic)
                            q = (q % npts + npts) % npts;
                        else
                            continue;
                    }
                    acc += coef[w] * in[base + q * stride];
                }
                out[base + i * stride] = acc * inv;
            }
        }
    }
}

Eigen::VectorXcd first_derivative(const Eigen::VectorXcd& in, long size, long stride, long npts,
                                  Boundary boundary, int order, double h) {
    Eigen::VectorXcd out(size);
    if (order == 2) {
        static const double c[] = {-1.0, 1.0};
        static const int o[] = {-1, 1};
        stencil_pass(in, out, size, stride, npts, boundary, c, o, 2, 2.0 * h);
    } else {
        static const double c[] = {1.0, -8.0, 8.0, -1.0};
        static const int o[] = {-2, -1, 1, 2};
        stencil_pass(in, out, size, stride, npts, boundary, c, o, 4, 12.0 * h);
    }
    return out;
}

Eigen::VectorXcd second_derivative(const Eigen::VectorXcd& in, long size, long stride, long npts,
                                   Boundary boundary, int order, double h) {
    Eigen::VectorXcd out(size);
    if (order == 2) {
        static const double c[] = {1.0, -2.0, 1.0};
        static const int o[] = {-1, 0, 1};
        stencil_pass(in, out, size, stride, npts, boundary, c, o, 3, h * h);
    } else {
        static const double c[] = {-1.0, 16.0, -30.0, 16.0, -1.0};
        static const int o[] = {-2, -1, 0, 1, 2};
        stencil_pass(in, out, size, stride, npts, boundary, c, o, 5, 12.0 * h * h);
    }
    return out;
}

// Applies a k×k matrix on particle j's spin index.
Eigen::VectorXcd spin_apply(const Eigen::VectorXcd& in, const Lay& L, int j, const Operator& m) {
    const long ss = L.spin_stride[j];
    const int k = L.k[j];
    const long block = ss * k;
    const long lines = L.size / block;
    Eigen::VectorXcd out(L.size);
    for (long line = 0; line < lines; ++line) {
        const long base0 = line * block;
        for (long inner = 0; inner < ss; ++inner) {
            const long base = base0 + inner;
            for (int p = 0; p < k; ++p) {
                Complex acc(0.0, 0.0);
                for (int q = 0; q < k; ++q) acc += m(p, q) * in[base + q * ss];
                out[base + p * ss] = acc;
            }
        }
    }
    return out;
}

void check_spec(const PartialHamiltonianSpec& spec, const Lay& L) {
    if (spec.particle < 0 || spec.particle >= L.n)
        throw invalid_input_error("hamiltonian particle index " + std::to_string(spec.particle) +
                                  " out of range for " + std::to_string(L.n) + " particles");
    if (spec.stencil_order != 2 && spec.stencil_order != 4)
        throw invalid_input_error("stencil_order must be 2 or 4, got " +
                                  std::to_string(spec.stencil_order));
    if (!std::isfinite(spec.mass) || spec.mass < 0.0)
        throw invalid_input_error("mass must be finite and nonnegative, got " + fmt(spec.mass));
    if (spec.scalar_potential && spec.matrix_potential)
        throw invalid_input_error("set at most one of scalar_potential and matrix_potential");
}

}  // namespace

long Grid::cells() const {
    long c = 1;
    for (int a = 0; a < space_dim; ++a) c *= points_per_axis;
    return c;
}

GridFunction::GridFunction(Grid grid, std::vector<int> spin_dims)
    : grid_(grid), spin_dims_(std::move(spin_dims)) {
    check_grid(grid_);
    if (spin_dims_.empty()) throw invalid_input_error("grid function needs at least one particle");
    spin_total_ = 1;
    long double total = 1.0L;
    cells_ = grid_.cells();
    for (std::size_t j = 0; j < spin_dims_.size(); ++j) {
        if (spin_dims_[j] < 1)
            throw invalid_input_error("spin dimension of particle " + std::to_string(j) +
                                      " must be at least 1");
        spin_total_ *= spin_dims_[j];
        total *= static_cast<long double>(cells_);
    }
    total *= static_cast<long double>(spin_total_);
    if (total > 3.0e8L)
        throw invalid_input_error("grid function too large: " + fmt(static_cast<double>(total)) +
                                  " values");
    long size = spin_total_;
    for (std::size_t j = 0; j < spin_dims_.size(); ++j) size *= cells_;
    values_ = Eigen::VectorXcd::Zero(size);
}

long GridFunction::cell_of(const std::vector<int>& axis_indices) const {
    if (static_cast<int>(axis_indices.size()) != grid_.space_dim)
        throw shape_error("cell_of needs " + std::to_string(grid_.space_dim) +
                          " axis indices, got " + std::to_string(axis_indices.size()));
    long c = 0;
    for (int a = 0; a < grid_.space_dim; ++a) {
        if (axis_indices[a] < 0 || axis_indices[a] >= grid_.points_per_axis)
            throw invalid_input_error("axis index " + std::to_string(axis_indices[a]) +
                                      " outside [0, " + std::to_string(grid_.points_per_axis) +
                                      ")");
        c = c * grid_.points_per_axis + axis_indices[a];
    }
    return c;
}

long GridFunction::index(const std::vector<long>& cells, const std::vector<int>& spins) const {
    const int n = n_particles();
    if (static_cast<int>(cells.size()) != n || static_cast<int>(spins.size()) != n)
        throw shape_error("index needs one cell and one spin per particle");
    long idx = 0;
    for (int j = 0; j < n; ++j) {
        if (cells[j] < 0 || cells[j] >= cells_)
            throw invalid_input_error("cell index " + std::to_string(cells[j]) + " outside [0, " +
                                      std::to_string(cells_) + ")");
        idx = idx * cells_ + cells[j];
    }
    for (int j = 0; j < n; ++j) {
        if (spins[j] < 0 || spins[j] >= spin_dims_[j])
            throw invalid_input_error("spin index " + std::to_string(spins[j]) +
                                      " outside [0, " + std::to_string(spin_dims_[j]) + ")");
        idx = idx * spin_dims_[j] + spins[j];
    }
    return idx;
}

Eigen::VectorXd GridFunction::position(long cell) const {
    if (cell < 0 || cell >= cells_)
        throw invalid_input_error("cell index " + std::to_string(cell) + " outside [0, " +
                                  std::to_string(cells_) + ")");
    Eigen::VectorXd x(grid_.space_dim);
    for (int a = grid_.space_dim - 1; a >= 0; --a) {
        x[a] = grid_.coord(cell % grid_.points_per_axis);
        cell /= grid_.points_per_axis;
    }
    return x;
}

Eigen::VectorXd GridFunction::positions(const std::vector<long>& cells) const {
    const int n = n_particles();
    if (static_cast<int>(cells.size()) != n)
        throw shape_error("positions needs one cell per particle");
    Eigen::VectorXd x(grid_.space_dim * n);
    for (int j = 0; j < n; ++j) x.segment(j * grid_.space_dim, grid_.space_dim) = position(cells[j]);
    return x;
}

double GridFunction::squared_norm() const {
    const double measure = std::pow(grid_.spacing, grid_.space_dim * n_particles());
    return measure * values_.squaredNorm();
}

double GridFunction::norm() const { return std::sqrt(squared_norm()); }

namespace {

GridFunction product_state(const Grid& grid,
                           const std::vector<Eigen::VectorXcd>& factors,
                           const std::vector<Eigen::VectorXcd>& spinors, const char* what) {
    const int n = static_cast<int>(factors.size());
    std::vector<int> sd(n);
    for (int j = 0; j < n; ++j) {
        if (spinors[j].size() < 1)
            throw invalid_input_error(std::string(what) + ": spinor of particle " +
                                      std::to_string(j) + " is empty");
        sd[j] = static_cast<int>(spinors[j].size());
    }
    GridFunction f(grid, sd);
    const Lay L = lay_of(f);
    std::vector<Complex> spin_amp(L.spin_total);
    for (long s = 0; s < L.spin_total; ++s) {
        Complex amp(1.0, 0.0);
        for (int j = 0; j < n; ++j) amp *= spinors[j][(s / L.spin_stride[j]) % L.k[j]];
        spin_amp[s] = amp;
    }
    const long joint = L.size / L.spin_total;
    std::vector<long> cells(n);
    for (long c = 0; c < joint; ++c) {
        split_cells(L, c, cells);
        Complex amp(1.0, 0.0);
        for (int j = 0; j < n; ++j) amp *= factors[j][cells[j]];
        const long base = c * L.spin_total;
        for (long s = 0; s < L.spin_total; ++s) f.values()[base + s] = amp * spin_amp[s];
    }
    const double nm = f.norm();
    if (!(nm > 0.0))
        throw invalid_input_error(std::string(what) + ": state has zero norm");
    f.values() /= nm;
    return f;
}

void check_state_arity(std::size_t a, std::size_t b, std::size_t c, const char* what) {
    if (a == 0 || a != b || a != c)
        throw shape_error(std::string(what) +
                          ": centers/widths (or cells/wavevectors) and spinors must list the "
                          "same nonzero number of particles");
}

}  // namespace

GridFunction make_gaussian_state(const Grid& grid, const std::vector<Eigen::VectorXd>& centers,
                                 const std::vector<double>& widths,
                                 const std::vector<Eigen::VectorXcd>& spinors) {
    check_grid(grid);
    check_state_arity(centers.size(), widths.size(), spinors.size(), "make_gaussian_state");
    const int n = static_cast<int>(centers.size());
    std::vector<Eigen::VectorXcd> factors(n);
    GridFunction probe(grid, std::vector<int>(n, 1));
    for (int j = 0; j < n; ++j) {
        if (centers[j].size() != grid.space_dim)
            throw shape_error("make_gaussian_state: center of particle " + std::to_string(j) +
                              " needs " + std::to_string(grid.space_dim) + " components");
        if (!std::isfinite(widths[j]) || !(widths[j] > 0.0))
            throw invalid_input_error("make_gaussian_state: width of particle " +
                                      std::to_string(j) + " must be positive");
        factors[j].resize(probe.cells_per_particle());
        for (long c = 0; c < probe.cells_per_particle(); ++c) {
            const double r2 = (probe.position(c) - centers[j]).squaredNorm();
            factors[j][c] = std::exp(-r2 / (2.0 * widths[j] * widths[j]));
        }
    }
    return product_state(grid, factors, spinors, "make_gaussian_state");
}

GridFunction make_plane_wave_state(const Grid& grid,
                                   const std::vector<Eigen::VectorXd>& wavevectors,
                                   const std::vector<Eigen::VectorXcd>& spinors) {
    check_grid(grid);
    check_state_arity(wavevectors.size(), wavevectors.size(), spinors.size(),
                      "make_plane_wave_state");
    const int n = static_cast<int>(wavevectors.size());
    std::vector<Eigen::VectorXcd> factors(n);
    GridFunction probe(grid, std::vector<int>(n, 1));
    for (int j = 0; j < n; ++j) {
        if (wavevectors[j].size() != grid.space_dim)
            throw shape_error("make_plane_wave_state: wavevector of particle " +
                              std::to_string(j) + " needs " + std::to_string(grid.space_dim) +
                              " components");
        factors[j].resize(probe.cells_per_particle());
        for (long c = 0; c < probe.cells_per_particle(); ++c)
            factors[j][c] = std::polar(1.0, wavevectors[j].dot(probe.position(c)));
    }
    return product_state(grid, factors, spinors, "make_plane_wave_state");
}

GridFunction make_delta_state(const Grid& grid, const std::vector<std::vector<int>>& cells,
                              const std::vector<Eigen::VectorXcd>& spinors) {
    check_grid(grid);
    check_state_arity(cells.size(), cells.size(), spinors.size(), "make_delta_state");
    const int n = static_cast<int>(cells.size());
    std::vector<Eigen::VectorXcd> factors(n);
    GridFunction probe(grid, std::vector<int>(n, 1));
    for (int j = 0; j < n; ++j) {
        factors[j] = Eigen::VectorXcd::Zero(probe.cells_per_particle());
        factors[j][probe.cell_of(cells[j])] = Complex(1.0, 0.0);
    }
    return product_state(grid, factors, spinors, "make_delta_state");
}

GridFunction apply_derivative(const GridFunction& psi, int particle, int axis,
                              int stencil_order) {
    const Lay L = lay_of(psi);
    if (particle < 0 || particle >= L.n)
        throw invalid_input_error("derivative particle index " + std::to_string(particle) +
                                  " out of range for " + std::to_string(L.n) + " particles");
    if (axis < 0 || axis >= L.d)
        throw invalid_input_error("derivative axis " + std::to_string(axis) +
                                  " out of range for space_dim " + std::to_string(L.d));
    if (stencil_order != 2 && stencil_order != 4)
        throw invalid_input_error("stencil_order must be 2 or 4, got " +
                                  std::to_string(stencil_order));
    GridFunction out = psi;
    out.values() = first_derivative(psi.values(), L.size, axis_stride(L, particle, axis),
                                    L.points, psi.grid().boundary, stencil_order,
                                    psi.grid().spacing);
    return out;
}

GridFunction apply_hamiltonian(const PartialHamiltonianSpec& spec, const GridFunction& psi) {
    const Lay L = lay_of(psi);
    const Grid& g = psi.grid();
    check_spec(spec, L);
    const int j = spec.particle;
    const int k = L.k[j];
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(L.size);
    const Complex minus_i(0.0, -1.0);
    switch (spec.kind) {
        case HamiltonianKind::schrodinger: {
            if (!(spec.mass > 0.0))
                throw invalid_input_error("schrodinger kind needs mass > 0, got " +
                                          fmt(spec.mass));
            const double c = -0.5 / spec.mass;
            for (int a = 0; a < L.d; ++a)
                out += c * second_derivative(psi.values(), L.size, axis_stride(L, j, a), L.points,
                                             g.boundary, spec.stencil_order, g.spacing);
            break;
        }
        case HamiltonianKind::dirac: {
            if (L.d != 3) throw shape_error("dirac kind needs a 3D grid");
            if (k != 4)
                throw shape_error("dirac kind needs spin dimension 4, particle " +
                                  std::to_string(j) + " has " + std::to_string(k));
            for (int a = 0; a < 3; ++a) {
                const Eigen::VectorXcd da =
                    first_derivative(psi.values(), L.size, axis_stride(L, j, a), L.points,
                                     g.boundary, spec.stencil_order, g.spacing);
                out += minus_i * spin_apply(da, L, j, dirac_alpha(a + 1));
            }
            if (spec.mass != 0.0) out += spec.mass * spin_apply(psi.values(), L, j, dirac_beta());
            break;
        }
        case HamiltonianKind::dirac1d: {
            if (L.d != 1) throw shape_error("dirac1d kind needs a 1D grid");
            if (k != 2)
                throw shape_error("dirac1d kind needs spin dimension 2, particle " +
                                  std::to_string(j) + " has " + std::to_string(k));
            const Eigen::VectorXcd dx =
                first_derivative(psi.values(), L.size, axis_stride(L, j, 0), L.points, g.boundary,
                                 spec.stencil_order, g.spacing);
            out += minus_i * spin_apply(dx, L, j, pauli_x());
            if (spec.mass != 0.0) out += spec.mass * spin_apply(psi.values(), L, j, pauli_z());
            break;
        }
    }
    if (spec.scalar_potential || spec.matrix_potential) {
        const long joint = L.size / L.spin_total;
        std::vector<long> cells(L.n);
        Eigen::VectorXd pos(L.d * L.n);
        const long ss = L.spin_stride[j];
        for (long c = 0; c < joint; ++c) {
            split_cells(L, c, cells);
            fill_positions(L, g, cells, pos);
            const long base = c * L.spin_total;
            if (spec.scalar_potential) {
                const double v = spec.scalar_potential(pos);
                if (!std::isfinite(v))
                    throw invalid_input_error("scalar potential evaluated non-finite at " +
                                              fmt_vec(pos));
                for (long s = 0; s < L.spin_total; ++s)
                    out[base + s] += v * psi.values()[base + s];
            } else {
                const Operator m = spec.matrix_potential(pos);
                if (m.rows() != k || m.cols() != k)
                    throw shape_error("matrix potential must be " + std::to_string(k) + "x" +
                                      std::to_string(k) + ", got " + std::to_string(m.rows()) +
                                      "x" + std::to_string(m.cols()));
                if (!m.allFinite() || !is_hermitian(m, 1e-10))
                    throw invalid_input_error("matrix potential must be Hermitian at " +
                                              fmt_vec(pos));
                const long groups = L.spin_total / (ss * k);
                for (long o = 0; o < groups; ++o)
                    for (long inner = 0; inner < ss; ++inner) {
                        const long b = base + o * ss * k + inner;
                        for (int p = 0; p < k; ++p) {
                            Complex acc(0.0, 0.0);
                            for (int q = 0; q < k; ++q) acc += m(p, q) * psi.values()[b + q * ss];
                            out[b + p * ss] += acc;
                        }
                    }
            }
        }
    }
    GridFunction result = psi;
    result.values() = std::move(out);
    return result;
}

double commutator_check(const PartialHamiltonianSpec& a, const PartialHamiltonianSpec& b,
                        const GridFunction& psi,
                        const std::function<GridFunction(const GridFunction&)>& analytic_rhs,
                        double support_margin) {
    if (!analytic_rhs) throw invalid_input_error("commutator_check needs an analytic right-hand side");
    const Lay L = lay_of(psi);
    if (support_margin > 0.0) {
        if (L.n != 2)
            throw invalid_input_error("support margin check needs a two-particle state");
        const double peak = psi.values().cwiseAbs().maxCoeff();
        if (peak > 0.0) {
            const double thr = kSupportFraction * peak;
            double best = std::numeric_limits<double>::infinity();
            long best_cell = -1;
            const long joint = L.size / L.spin_total;
            std::vector<long> cells(2);
            Eigen::VectorXd pos(2 * L.d);
            for (long c = 0; c < joint; ++c) {
                const long base = c * L.spin_total;
                double m = 0.0;
                for (long s = 0; s < L.spin_total; ++s)
                    m = std::max(m, std::abs(psi.values()[base + s]));
                if (m <= thr) continue;
                split_cells(L, c, cells);
                fill_positions(L, psi.grid(), cells, pos);
                const double dist = (pos.head(L.d) - pos.tail(L.d)).norm();
                if (dist < best) {
                    best = dist;
                    best_cell = c;
                }
            }
            if (best_cell >= 0 && best < support_margin) {
                split_cells(L, best_cell, cells);
                fill_positions(L, psi.grid(), cells, pos);
                throw invalid_input_error(
                    "state support enters the singular margin: |x1 - x2| = " + fmt(best) +
                    " < " + fmt(support_margin) + " near x1 = " +
                    fmt_vec(Eigen::VectorXd(pos.head(L.d))) + ", x2 = " +
                    fmt_vec(Eigen::VectorXd(pos.tail(L.d))));
            }
        }
    }
    const GridFunction hab = apply_hamiltonian(a, apply_hamiltonian(b, psi));
    const GridFunction hba = apply_hamiltonian(b, apply_hamiltonian(a, psi));
    const GridFunction r = analytic_rhs(psi);
    if (r.size() != psi.size() || r.n_particles() != psi.n_particles())
        throw shape_error("analytic right-hand side returned a mismatched grid function");
    const double num = (hab.values() - hba.values() - r.values()).norm();
    double den = r.values().norm();
    if (den == 0.0) den = psi.values().norm();
    if (den == 0.0) return 0.0;
    return num / den;
}

double schrodinger_pair_commutator_slice(
    const Grid& grid, const SliceSpec& slice,
    const std::function<double(const Eigen::Vector3d&, const Eigen::Vector3d&)>& potential,
    const std::function<Complex(const Eigen::Vector3d&, const Eigen::Vector3d&)>& psi,
    const PairFirstOrderOp& analytic_rhs) {
    check_grid(grid);
    if (grid.space_dim != 3) throw shape_error("slice commutator needs a 3D grid");
    if (slice.stencil_order != 2 && slice.stencil_order != 4)
        throw invalid_input_error("stencil_order must be 2 or 4, got " +
                                  std::to_string(slice.stencil_order));
    if (!std::isfinite(slice.mass) || !(slice.mass > 0.0))
        throw invalid_input_error("slice commutator needs mass > 0, got " + fmt(slice.mass));
    if (!potential || !psi || !analytic_rhs.grad1 || !analytic_rhs.grad2)
        throw invalid_input_error(
            "slice commutator needs the potential, the state, and both gradient coefficients");
    const double h = grid.spacing;
    const double margin = slice.support_margin < 0.0 ? 5.0 * h : slice.support_margin;
    const int hw = slice.stencil_order / 2;
    const long npts = grid.points_per_axis;
    const long ncells = grid.cells();
    const int narr = 1 + 6 * hw;
    const auto oid = [hw](int a, int k) { return 1 + a * 2 * hw + (k < 0 ? k + hw : k + hw - 1); };

    GridFunction probe(grid, std::vector<int>{1});
    std::vector<Eigen::VectorXcd> A(narr, Eigen::VectorXcd(ncells));
    std::vector<Eigen::VectorXd> V(narr, Eigen::VectorXd(ncells));
    for (long c = 0; c < ncells; ++c) {
        const Eigen::Vector3d x1 = probe.position(c);
        for (int id = 0; id < narr; ++id) {
            Eigen::Vector3d x2 = slice.frozen_x2;
            if (id > 0) {
                const int a = (id - 1) / (2 * hw);
                const int t = (id - 1) % (2 * hw);
                const int k = t < hw ? t - hw : t - hw + 1;
                x2[a] += k * h;
            }
            const Complex pv = psi(x1, x2);
            const double vv = potential(x1, x2);
            if (!std::isfinite(pv.real()) || !std::isfinite(pv.imag()))
                throw invalid_input_error("state evaluated non-finite at x1 = " + fmt_vec(x1) +
                                          ", x2 = " + fmt_vec(x2));
            if (!std::isfinite(vv))
                throw invalid_input_error("potential evaluated non-finite at x1 = " +
                                          fmt_vec(x1) + ", x2 = " + fmt_vec(x2));
            A[id][c] = pv;
            V[id][c] = vv;
        }
    }

    const double peak = A[0].cwiseAbs().maxCoeff();
    if (peak > 0.0) {
        const double thr = kSupportFraction * peak;
        double best = std::numeric_limits<double>::infinity();
        long best_cell = -1;
        for (long c = 0; c < ncells; ++c) {
            if (std::abs(A[0][c]) <= thr) continue;
            const double dist = (probe.position(c) - slice.frozen_x2).norm();
            if (dist < best) {
                best = dist;
                best_cell = c;
            }
        }
        if (best_cell >= 0 && best < margin)
            throw invalid_input_error(
                "state support enters the singular margin: |x1 - x2| = " + fmt(best) + " < " +
                fmt(margin) + " near x1 = " + fmt_vec(probe.position(best_cell)) + ", x2 = " +
                fmt_vec(slice.frozen_x2));
    }

    const Lay L1 = lay_of(probe);
    const auto grid_d1 = [&](const Eigen::VectorXcd& in, int a) {
        return first_derivative(in, ncells, axis_stride(L1, 0, a), npts, grid.boundary,
                                slice.stencil_order, h);
    };
    const auto grid_d2 = [&](const Eigen::VectorXcd& in, int a) {
        return second_derivative(in, ncells, axis_stride(L1, 0, a), npts, grid.boundary,
                                 slice.stencil_order, h);
    };
    // Second and first differences in the frozen coordinate, formed from
    // the off-slice sample arrays with the same coefficients as the grid
    // stencils.
    const auto off_d2 = [&](const std::vector<Eigen::VectorXcd>& arr, int a) {
        if (hw == 1)
            return Eigen::VectorXcd(
                (arr[oid(a, 1)] - 2.0 * arr[0] + arr[oid(a, -1)]) / (h * h));
        return Eigen::VectorXcd((-arr[oid(a, 2)] + 16.0 * arr[oid(a, 1)] - 30.0 * arr[0] +
                                 16.0 * arr[oid(a, -1)] - arr[oid(a, -2)]) /
                                (12.0 * h * h));
    };
    const auto off_d1 = [&](const std::vector<Eigen::VectorXcd>& arr, int a) {
        if (hw == 1) return Eigen::VectorXcd((arr[oid(a, 1)] - arr[oid(a, -1)]) / (2.0 * h));
        return Eigen::VectorXcd((arr[oid(a, 2)] * -1.0 + 8.0 * arr[oid(a, 1)] -
                                 8.0 * arr[oid(a, -1)] + arr[oid(a, -2)]) /
                                (12.0 * h));
    };
    const auto mul = [](const Eigen::VectorXd& w, const Eigen::VectorXcd& z) {
        return Eigen::VectorXcd(w.cast<Complex>().cwiseProduct(z));
    };
    const double kin = -0.5 / slice.mass;

    // H2ψ on the slice, then H1 applied to it on the grid.
    Eigen::VectorXcd h2psi = mul(V[0], A[0]);
    for (int a = 0; a < 3; ++a) h2psi += kin * off_d2(A, a);
    Eigen::VectorXcd t1 = mul(V[0], h2psi);
    for (int a = 0; a < 3; ++a) t1 += kin * grid_d2(h2psi, a);

    // H1ψ at every frozen-coordinate offset, then H2 across the offsets.
    std::vector<Eigen::VectorXcd> B(narr);
    for (int id = 0; id < narr; ++id) {
        B[id] = mul(V[id], A[id]);
        for (int a = 0; a < 3; ++a) B[id] += kin * grid_d2(A[id], a);
    }
    Eigen::VectorXcd t2 = mul(V[0], B[0]);
    for (int a = 0; a < 3; ++a) t2 += kin * off_d2(B, a);

    // Analytic side with the same stencils.
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(ncells);
    std::vector<Eigen::VectorXcd> g1(3), g2(3);
    for (int a = 0; a < 3; ++a) {
        g1[a] = grid_d1(A[0], a);
        g2[a] = off_d1(A, a);
    }
    for (long c = 0; c < ncells; ++c) {
        const Eigen::Vector3d x1 = probe.position(c);
        const Eigen::Vector3d c1 = analytic_rhs.grad1(x1, slice.frozen_x2);
        const Eigen::Vector3d c2 = analytic_rhs.grad2(x1, slice.frozen_x2);
        Complex acc(0.0, 0.0);
        for (int a = 0; a < 3; ++a) acc += c1[a] * g1[a][c] + c2[a] * g2[a][c];
        rhs[c] = acc;
    }

    const double num = (t1 - t2 - rhs).norm();
    double den = rhs.norm();
    if (den == 0.0) den = A[0].norm();
    if (den == 0.0) return 0.0;
    return num / den;
}

namespace {

long checked_steps(double t, double h, const char* what) {
    if (!std::isfinite(t))
        throw invalid_input_error(std::string(what) + ": time must be finite");
    const double raw = std::abs(t) / h;
    const long steps = static_cast<long>(std::llround(raw));
    if (std::abs(raw - static_cast<double>(steps)) > 1e-9 * std::max(1.0, raw))
        throw invalid_input_error(std::string(what) +
                                  ": |t| must be an integer multiple of the grid spacing (t = " +
                                  fmt(t) + ", spacing = " + fmt(h) + ")");
    return steps;
}

void hadamard(Eigen::VectorXcd& v, const Lay& L, int j) {
    const long ss = L.spin_stride[j];
    const long block = ss * 2;
    const long lines = L.size / block;
    for (long line = 0; line < lines; ++line) {
        const long base0 = line * block;
        for (long inner = 0; inner < ss; ++inner) {
            const long a = base0 + inner;
            const long b = a + ss;
            const Complex u = v[a];
            const Complex w = v[b];
            v[a] = (u + w) * kInvSqrt2;
            v[b] = (u - w) * kInvSqrt2;
        }
    }
}

void shift_component(Eigen::VectorXcd& v, const Lay& L, Boundary boundary, int j, int comp,
                     int move, double leave_tol) {
    const long cs = L.cell_stride[j];  // d = 1: one cell step
    const long npts = L.points;
    const long block = cs * npts;
    const long lines = L.size / block;
    const long ss = L.spin_stride[j];
    for (long line = 0; line < lines; ++line) {
        const long base0 = line * block;
        for (long inner = 0; inner < cs; ++inner) {
            if (static_cast<int>((inner % L.spin_total) / ss) % L.k[j] != comp) continue;
            const long base = base0 + inner;
            if (move > 0) {
                const Complex leaving = v[base + (npts - 1) * cs];
                if (boundary == Boundary::zero_padded && std::abs(leaving) > leave_tol)
                    throw invalid_input_error(
                        "light cone reached the zero-padded grid boundary (particle " +
                        std::to_string(j) + ")");
                for (long i = npts - 1; i >= 1; --i) v[base + i * cs] = v[base + (i - 1) * cs];
                v[base] = boundary == Boundary::periodic ? leaving : Complex(0.0, 0.0);
            } else {
                const Complex leaving = v[base];
                if (boundary == Boundary::zero_padded && std::abs(leaving) > leave_tol)
                    throw invalid_input_error(
                        "light cone reached the zero-padded grid boundary (particle " +
                        std::to_string(j) + ")");
                for (long i = 0; i + 1 < npts; ++i) v[base + i * cs] = v[base + (i + 1) * cs];
                v[base + (npts - 1) * cs] =
                    boundary == Boundary::periodic ? leaving : Complex(0.0, 0.0);
            }
        }
    }
}

// One streaming pass: the σ₁ = +1 mode moves by dir cells, the −1 mode
// the opposite way, implemented in the Hadamard frame.
void stream(Eigen::VectorXcd& v, const Lay& L, Boundary boundary, int j, int dir,
            double leave_tol) {
    hadamard(v, L, j);
    shift_component(v, L, boundary, j, 0, dir, leave_tol);
    shift_component(v, L, boundary, j, 1, -dir, leave_tol);
    hadamard(v, L, j);
}

// Diagonal half-step rotation table exp(−i half_dt (V(cell) + Σ m_j σ₃)).
Eigen::VectorXcd build_phase(const Lay& L, const std::vector<int>& family,
                             const std::vector<double>& masses,
                             const std::function<double(long)>& cell_v, double half_dt) {
    std::vector<double> msig(L.spin_total, 0.0);
    for (long s = 0; s < L.spin_total; ++s) {
        double m = 0.0;
        for (int j : family)
            m += masses[j] * (static_cast<int>((s / L.spin_stride[j]) % L.k[j]) == 0 ? 1.0 : -1.0);
        msig[s] = m;
    }
    const long joint = L.size / L.spin_total;
    Eigen::VectorXcd ph(L.size);
    for (long c = 0; c < joint; ++c) {
        const double val = cell_v ? cell_v(c) : 0.0;
        const long base = c * L.spin_total;
        for (long s = 0; s < L.spin_total; ++s)
            ph[base + s] = std::polar(1.0, -half_dt * (val + msig[s]));
    }
    return ph;
}

// exp(−i·scale·hloc) for a Hermitian 2×2, in closed Pauli form.
Eigen::Matrix2cd su2_exp(const Eigen::Matrix2cd& hloc, double scale) {
    const double c0 = 0.5 * std::real(hloc(0, 0) + hloc(1, 1));
    const double c3 = 0.5 * std::real(hloc(0, 0) - hloc(1, 1));
    const double c1 = std::real(hloc(0, 1));
    const double c2 = -std::imag(hloc(0, 1));
    const double r = std::sqrt(c1 * c1 + c2 * c2 + c3 * c3);
    const Complex ph = std::polar(1.0, -scale * c0);
    Eigen::Matrix2cd u = Eigen::Matrix2cd::Identity();
    if (r > 0.0) {
        const double cs = std::cos(scale * r);
        const Complex msn(0.0, -std::sin(scale * r));
        Eigen::Matrix2cd ns;
        ns(0, 0) = Complex(c3 / r, 0.0);
        ns(0, 1) = Complex(c1 / r, -c2 / r);
        ns(1, 0) = Complex(c1 / r, c2 / r);
        ns(1, 1) = Complex(-c3 / r, 0.0);
        u = cs * Eigen::Matrix2cd::Identity() + msn * ns;
    }
    return ph * u;
}

void rotate_diagonal(Eigen::VectorXcd& v, const Eigen::VectorXcd& phase) {
    v.array() *= phase.array();
}

void rotate_cells(Eigen::VectorXcd& v, const Lay& L, int j,
                  const std::vector<Eigen::Matrix2cd>& cell_u) {
    const long joint = L.size / L.spin_total;
    const long ss = L.spin_stride[j];
    const long groups = L.spin_total / (ss * 2);
    std::vector<long> cells(L.n);
    for (long c = 0; c < joint; ++c) {
        split_cells(L, c, cells);
        const Eigen::Matrix2cd& u = cell_u[cells[j]];
        const long base = c * L.spin_total;
        for (long o = 0; o < groups; ++o)
            for (long inner = 0; inner < ss; ++inner) {
                const long a = base + o * ss * 2 + inner;
                const long b = a + ss;
                const Complex x = v[a];
                const Complex y = v[b];
                v[a] = u(0, 0) * x + u(0, 1) * y;
                v[b] = u(1, 0) * x + u(1, 1) * y;
            }
    }
}

struct RotationPlan {
    Eigen::VectorXcd phase;                // diagonal mode, aligned with values
    std::vector<Eigen::Matrix2cd> cell_u;  // per-cell mode on one particle
    int matrix_particle = -1;
};

void run_characteristic(Eigen::VectorXcd& v, const Lay& L, Boundary boundary,
                        const std::vector<int>& family, long steps, int dir,
                        const RotationPlan& rot) {
    if (steps == 0) return;
    const double sup = v.cwiseAbs().maxCoeff();
    const double leave_tol = kBoundaryFraction * sup;
    for (long s = 0; s < steps; ++s) {
        if (rot.matrix_particle >= 0)
            rotate_cells(v, L, rot.matrix_particle, rot.cell_u);
        else
            rotate_diagonal(v, rot.phase);
        for (int j : family) stream(v, L, boundary, j, dir, leave_tol);
        if (rot.matrix_particle >= 0)
            rotate_cells(v, L, rot.matrix_particle, rot.cell_u);
        else
            rotate_diagonal(v, rot.phase);
    }
}

void check_dirac1d_state(const Lay& L, const char* what) {
    if (L.d != 1) throw shape_error(std::string(what) + " needs a 1D grid");
    for (int j = 0; j < L.n; ++j)
        if (L.k[j] != 2)
            throw shape_error(std::string(what) + " needs spin dimension 2 per particle, particle " +
                              std::to_string(j) + " has " + std::to_string(L.k[j]));
}

}  // namespace

GridFunction dirac1d_evolve(const GridFunction& psi0, double t, const Dirac1dOptions& opt) {
    const Lay L = lay_of(psi0);
    if (L.n != 1) throw shape_error("dirac1d_evolve needs a 1-particle state");
    check_dirac1d_state(L, "dirac1d_evolve");
    if (!std::isfinite(opt.mass) || opt.mass < 0.0)
        throw invalid_input_error("mass must be finite and nonnegative, got " + fmt(opt.mass));
    if (opt.scalar_potential && opt.matrix_potential)
        throw invalid_input_error("set at most one of scalar_potential and matrix_potential");
    const Grid& g = psi0.grid();
    const long steps = checked_steps(t, g.spacing, "dirac1d_evolve");
    GridFunction out = psi0;
    if (steps == 0) return out;
    const int dir = t >= 0.0 ? 1 : -1;
    const double half_dt = 0.5 * dir * g.spacing;
    RotationPlan rot;
    if (opt.matrix_potential) {
        rot.matrix_particle = 0;
        rot.cell_u.resize(L.cells);
        const Operator sz = pauli_z();
        for (long c = 0; c < L.cells; ++c) {
            const double x = g.coord(c);
            const Operator m = opt.matrix_potential(x);
            if (m.rows() != 2 || m.cols() != 2)
                throw shape_error("matrix potential must be 2x2, got " + std::to_string(m.rows()) +
                                  "x" + std::to_string(m.cols()));
            if (!m.allFinite() || !is_hermitian(m, 1e-10))
                throw invalid_input_error("matrix potential must be Hermitian at x = " + fmt(x));
            const Eigen::Matrix2cd hloc = m + opt.mass * sz;
            rot.cell_u[c] = su2_exp(hloc, half_dt);
        }
    } else {
        std::function<double(long)> cv;
        if (opt.scalar_potential)
            cv = [&](long c) {
                const double x = g.coord(c);
                const double val = opt.scalar_potential(x);
                if (!std::isfinite(val))
                    throw invalid_input_error("potential evaluated non-finite at x = " + fmt(x));
                return val;
            };
        rot.phase = build_phase(L, {0}, {opt.mass}, cv, half_dt);
    }
    run_characteristic(out.values(), L, g.boundary, {0}, steps, dir, rot);
    return out;
}

std::vector<LightConeRow> dirac1d_lightcone_scan(const GridFunction& psi0, double t,
                                                 const Dirac1dOptions& opt, long support_lo,
                                                 long support_hi) {
    const Lay L = lay_of(psi0);
    if (L.n != 1) throw shape_error("dirac1d_lightcone_scan needs a 1-particle state");
    check_dirac1d_state(L, "dirac1d_lightcone_scan");
    if (support_lo > support_hi || support_lo < 0 || support_hi >= L.points)
        throw invalid_input_error("support interval [" + std::to_string(support_lo) + ", " +
                                  std::to_string(support_hi) + "] is not a cell range of the grid");
    const long steps = checked_steps(t, psi0.grid().spacing, "dirac1d_lightcone_scan");
    const double step_t = (t >= 0.0 ? 1.0 : -1.0) * psi0.grid().spacing;
    std::vector<LightConeRow> rows;
    rows.reserve(steps);
    GridFunction state = psi0;
    for (long k = 1; k <= steps; ++k) {
        state = dirac1d_evolve(state, step_t, opt);
        const long lo = support_lo - k;
        const long hi = support_hi + k;
        double worst = 0.0;
        for (long c = 0; c < L.points; ++c) {
            if (c >= lo && c <= hi) continue;
            for (int s = 0; s < 2; ++s)
                worst = std::max(worst, std::abs(state.values()[c * 2 + s]));
        }
        rows.push_back({k, worst});
    }
    return rows;
}

namespace {

// C² cutoff: 1 on |r| ≤ δ−2h, 0 on |r| ≥ δ, a smootherstep ramp between.
double range_bump(double r, double delta, double h) {
    const double a = std::abs(r);
    if (a >= delta) return 0.0;
    const double lo = std::max(0.0, delta - 2.0 * h);
    if (a <= lo) return 1.0;
    const double u = (a - lo) / (delta - lo);
    return 1.0 - u * u * u * (u * (6.0 * u - 15.0) + 10.0);
}

}  // namespace

GridFunction nparticle_dirac_evolve(const GridFunction& psi0, const std::vector<int>& family,
                                    double t, const NParticleOptions& opt) {
    const Lay L = lay_of(psi0);
    check_dirac1d_state(L, "nparticle_dirac_evolve");
    if (static_cast<int>(opt.masses.size()) != L.n)
        throw invalid_input_error("masses must list one value per particle: got " +
                                  std::to_string(opt.masses.size()) + " for " +
                                  std::to_string(L.n) + " particles");
    for (int j = 0; j < L.n; ++j)
        if (!std::isfinite(opt.masses[j]) || opt.masses[j] < 0.0)
            throw invalid_input_error("mass of particle " + std::to_string(j) +
                                      " must be finite and nonnegative");
    std::vector<char> seen(L.n, 0);
    for (int j : family) {
        if (j < 0 || j >= L.n)
            throw invalid_input_error("family particle " + std::to_string(j) +
                                      " out of range for " + std::to_string(L.n) + " particles");
        if (seen[j]) throw invalid_input_error("family lists particle " + std::to_string(j) + " twice");
        seen[j] = 1;
    }
    const Grid& g = psi0.grid();
    const long steps = checked_steps(t, g.spacing, "nparticle_dirac_evolve");
    GridFunction out = psi0;
    if (steps == 0 || family.empty()) return out;
    const int dir = t >= 0.0 ? 1 : -1;
    const double half_dt = 0.5 * dir * g.spacing;

    std::function<double(long)> cv;
    std::vector<double> wtab;
    if (opt.pair.profile) {
        if (!std::isfinite(opt.pair.range) || !(opt.pair.range > 0.0))
            throw invalid_input_error("pair potential needs range > 0, got " +
                                      fmt(opt.pair.range));
        wtab.assign(2 * L.points - 1, 0.0);
        for (long dcell = -(L.points - 1); dcell <= L.points - 1; ++dcell) {
            const double r = dcell * g.spacing;
            const double bump = range_bump(r, opt.pair.range, g.spacing);
            if (bump == 0.0) continue;  // profile is never sampled outside the range
            const Complex w = opt.pair.profile(r);
            if (!std::isfinite(w.real()) || !std::isfinite(w.imag()))
                throw invalid_input_error("pair potential evaluated non-finite at r = " + fmt(r));
            if (std::abs(w.imag()) > 1e-12 * std::max(1.0, std::abs(w.real())))
                throw invalid_input_error("pair potential must be real (Hermitian): W(" + fmt(r) +
                                          ") has imaginary part " + fmt(w.imag()));
            wtab[dcell + L.points - 1] = bump * w.real();
        }
        const std::vector<int> fam = family;
        const Lay* lp = &L;
        cv = [fam, lp, &wtab](long joint) {
            std::vector<long> cells(lp->n);
            split_cells(*lp, joint, cells);
            double v = 0.0;
            for (std::size_t a = 0; a < fam.size(); ++a)
                for (std::size_t b = 0; b < fam.size(); ++b) {
                    if (a == b) continue;
                    v += wtab[cells[fam[a]] - cells[fam[b]] + lp->points - 1];
                }
            return v;
        };
    }
    RotationPlan rot;
    rot.phase = build_phase(L, family, opt.masses, cv, half_dt);
    std::vector<int> order = family;
    std::sort(order.begin(), order.end());
    run_characteristic(out.values(), L, g.boundary, order, steps, dir, rot);
    return out;
}

OrderGapResult order_gap(const PartialHamiltonianSpec& a, const PartialHamiltonianSpec& b,
                         const GridFunction& psi0, double t1, double t2, double dt) {
    const Lay L = lay_of(psi0);
    check_dirac1d_state(L, "order_gap");
    for (const PartialHamiltonianSpec* s : {&a, &b}) {
        check_spec(*s, L);
        if (s->kind != HamiltonianKind::dirac1d)
            throw invalid_input_error(
                "order_gap evolves dirac1d partial Hamiltonians only (the characteristic scheme "
                "is the 1D one)");
    }
    const Grid& g = psi0.grid();
    if (!std::isfinite(dt) || std::abs(dt - g.spacing) > 1e-12 * g.spacing)
        throw invalid_input_error("order_gap needs dt equal to the grid spacing (dt = " + fmt(dt) +
                                  ", spacing = " + fmt(g.spacing) + ")");
    const double n0 = psi0.norm();
    if (!(n0 > 0.0)) throw invalid_input_error("order_gap needs a nonzero initial state");

    const auto evolve_one = [&](GridFunction st, const PartialHamiltonianSpec& spec, double t) {
        const long steps = checked_steps(t, g.spacing, "order_gap");
        if (steps == 0) return st;
        const int dir = t >= 0.0 ? 1 : -1;
        const double half_dt = 0.5 * dir * g.spacing;
        const Lay Ls = lay_of(st);
        RotationPlan rot;
        if (spec.matrix_potential) {
            // The matrix potential may read every position; per-cell 2x2
            // rotations only cover dependence on the moving particle alone.
            if (Ls.n != 1)
                throw invalid_input_error(
                    "order_gap supports matrix potentials only for single-particle states");
            rot.matrix_particle = spec.particle;
            rot.cell_u.resize(Ls.cells);
            Eigen::VectorXd pos(1);
            const Operator sz = pauli_z();
            for (long c = 0; c < Ls.cells; ++c) {
                pos[0] = g.coord(c);
                const Operator m = spec.matrix_potential(pos);
                if (m.rows() != 2 || m.cols() != 2)
                    throw shape_error("matrix potential must be 2x2, got " +
                                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
                if (!m.allFinite() || !is_hermitian(m, 1e-10))
                    throw invalid_input_error("matrix potential must be Hermitian at x = " +
                                              fmt(pos[0]));
                rot.cell_u[c] = su2_exp(Eigen::Matrix2cd(m + spec.mass * sz), half_dt);
            }
        } else {
            std::function<double(long)> cv;
            if (spec.scalar_potential) {
                const Lay* lp = &Ls;
                cv = [&spec, lp, &g](long joint) {
                    std::vector<long> cells(lp->n);
                    split_cells(*lp, joint, cells);
                    Eigen::VectorXd pos(lp->n);
                    fill_positions(*lp, g, cells, pos);
                    const double val = spec.scalar_potential(pos);
                    if (!std::isfinite(val))
                        throw invalid_input_error("potential evaluated non-finite at " +
                                                  fmt_vec(pos));
                    return val;
                };
            }
            std::vector<double> masses(Ls.n, 0.0);
            masses[spec.particle] = spec.mass;
            rot.phase = build_phase(Ls, {spec.particle}, masses, cv, half_dt);
        }
        run_characteristic(st.values(), Ls, g.boundary, {spec.particle}, steps, dir, rot);
        const double drift = std::abs(st.norm() - n0);
        if (drift > 0.01 * n0)
            throw integrator_failure_error("norm drifted by " + fmt(drift / n0) +
                                           " of the initial norm during order_gap evolution");
        return st;
    };

    const GridFunction ab = evolve_one(evolve_one(psi0, a, t1), b, t2);
    const GridFunction ba = evolve_one(evolve_one(psi0, b, t2), a, t1);
    const double measure = std::pow(g.spacing, L.d * L.n);
    OrderGapResult res;
    res.gap = std::sqrt(measure) * (ab.values() - ba.values()).norm();
    const GridFunction hab = apply_hamiltonian(a, apply_hamiltonian(b, psi0));
    const GridFunction hba = apply_hamiltonian(b, apply_hamiltonian(a, psi0));
    res.commutator_norm = std::sqrt(measure) * (hab.values() - hba.values()).norm();
    const double den = std::abs(t1) * std::abs(t2) * res.commutator_norm;
    if (den > 0.0)
        res.normalized = res.gap / den;
    else
        res.normalized = res.gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return res;
}

void write_snapshot(const GridFunction& psi, const std::vector<double>& time_tuple,
                    const std::string& path) {
    if (static_cast<int>(time_tuple.size()) != psi.n_particles())
        throw invalid_input_error("time_tuple needs one entry per particle: got " +
                                  std::to_string(time_tuple.size()) + " for " +
                                  std::to_string(psi.n_particles()) + " particles");
    const Grid& g = psi.grid();
    nlohmann::json header;
    header["grid"] = {{"space_dim", g.space_dim},
                      {"points_per_axis", g.points_per_axis},
                      {"spacing", g.spacing},
                      {"origin", g.origin},
                      {"boundary", g.boundary == Boundary::periodic ? "periodic" : "zero-padded"}};
    header["particles"] = psi.n_particles();
    header["spin_dims"] = psi.spin_dims();
    header["time_tuple"] = time_tuple;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    for (long i = 0; i < psi.size(); ++i) {
        const double buf[2] = {psi.values()[i].real(), psi.values()[i].imag()};
        out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
    }
    out.flush();
    if (!out) throw io_error("write failed for " + path);
}

GridFunction read_snapshot(const std::string& path, std::vector<double>* time_tuple) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw io_error("missing snapshot header line in " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
        throw io_error("bad snapshot header in " + path + ": " + e.what());
    }
    for (const char* key : {"grid", "particles", "spin_dims", "time_tuple"})
        if (!header.contains(key))
            throw io_error("snapshot header missing \"" + std::string(key) + "\" in " + path);
    Grid g;
    std::vector<int> sd;
    std::vector<double> tt;
    try {
        const nlohmann::json& jg = header["grid"];
        g.space_dim = jg.at("space_dim").get<int>();
        g.points_per_axis = jg.at("points_per_axis").get<int>();
        g.spacing = jg.at("spacing").get<double>();
        g.origin = jg.at("origin").get<double>();
        const std::string b = jg.at("boundary").get<std::string>();
        if (b == "periodic")
            g.boundary = Boundary::periodic;
        else if (b == "zero-padded")
            g.boundary = Boundary::zero_padded;
        else
            throw io_error("unknown boundary \"" + b + "\"");
        sd = header["spin_dims"].get<std::vector<int>>();
        tt = header["time_tuple"].get<std::vector<double>>();
        if (header["particles"].get<int>() != static_cast<int>(sd.size()))
            throw io_error("particle count disagrees with spin_dims");
    } catch (const io_error&) {
        throw;
    } catch (const std::exception& e) {
        throw io_error("bad snapshot header in " + path + ": " + e.what());
    }
    if (tt.size() != sd.size())
        throw io_error("snapshot time_tuple length disagrees with particle count in " + path);
    GridFunction f = [&] {
        try {
            return GridFunction(g, sd);
        } catch (const std::exception& e) {
            throw io_error("snapshot header describes an invalid grid in " + path + ": " +
                           e.what());
        }
    }();
    for (long i = 0; i < f.size(); ++i) {
        double buf[2];
        in.read(reinterpret_cast<char*>(buf), sizeof(buf));
        if (!in) throw io_error("snapshot payload truncated in " + path);
        f.values()[i] = Complex(buf[0], buf[1]);
    }
    if (in.get() != std::ifstream::traits_type::eof())
        throw io_error("trailing bytes after snapshot payload in " + path);
    if (time_tuple) *time_tuple = tt;
    return f;
}

}  // namespace multitime

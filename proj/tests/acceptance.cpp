// Acceptance suite for the multi-time engine. Each numbered check prints
// exactly one PASS/FAIL line with its measured figures and elapsed time;
// the process exits nonzero if any check fails. Tolerances are pinned here.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "multitime/delta_model.hpp"
#include "multitime/field.hpp"
#include "multitime/holonomy.hpp"
#include "multitime/lattice.hpp"
#include "multitime/operator.hpp"
#include "multitime/polynomial.hpp"
#include "multitime/potential.hpp"

using namespace multitime;

namespace {

constexpr double kPi = 3.14159265358979323846;

int g_failures = 0;

void report(int id, bool pass, const std::string& what, double elapsed_ms) {
    std::printf("[%d/9] %s  %s  (%.0f ms)\n", id, pass ? "PASS" : "FAIL", what.c_str(),
                elapsed_ms);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

Operator random_hermitian(int dim, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Operator m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = Complex(u(rng), u(rng));
    Operator a = 0.5 * (m + m.adjoint());
    return a / operator_norm(a);
}

// --------------------------------------------------------------- check 1
// Flat generator families transport path-independently; families with a
// sizable pairwise obstruction do not.

void check_path_independence() {
    constexpr double kFlatTol = 1e-6;
    constexpr double kCurvedFloor = 1e-3;
    constexpr int kStepsPerSegment = 1000;
    Timer timer;
    std::mt19937 rng(20260818);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> dim_pick(2, 8);

    const TimePoint start = TimePoint::Zero(2);
    const TimePoint end = TimePoint::Constant(2, 1.0);

    // Per field: five staircases (two canonical + three random), gap of
    // each of the last four against the first.
    const auto field_gap = [&](const HamiltonianField& field, unsigned seed) {
        std::vector<TimePath> paths;
        paths.push_back(make_staircase(start, end, 0, kStepsPerSegment));
        paths.push_back(make_staircase(start, end, 1, kStepsPerSegment));
        for (unsigned k = 0; k < 3; ++k)
            paths.push_back(
                make_random_staircase(start, end, 2 + static_cast<int>(k), kStepsPerSegment,
                                      seed * 16 + k));
        double worst = 0.0;
        for (std::size_t i = 1; i < paths.size(); ++i)
            worst = std::max(worst, path_independence_gap(field, paths[0], paths[i]));
        return worst;
    };

    double max_flat_gap = 0.0;
    for (unsigned f = 0; f < 10; ++f) {
        const HamiltonianField field = make_commuting_diagonal_field(2, dim_pick(rng), f + 1);
        max_flat_gap = std::max(max_flat_gap, field_gap(field, f));
    }
    for (unsigned f = 0; f < 10; ++f) {
        std::vector<Monomial> terms;
        terms.push_back({u(rng), {1, 0}});
        terms.push_back({u(rng), {0, 1}});
        terms.push_back({u(rng), {1, 1}});
        terms.push_back({u(rng), {2, 0}});
        terms.push_back({u(rng), {0, 2}});
        const Polynomial g(2, std::move(terms));
        const HamiltonianField field = make_gradient_scalar_field(g, random_hermitian(dim_pick(rng), rng));
        max_flat_gap = std::max(max_flat_gap, field_gap(field, 100 + f));
    }

    double min_curved_gap = 1e300;
    double min_obstruction = 1e300;
    for (unsigned f = 0; f < 20; ++f) {
        const int dim = dim_pick(rng);
        Operator h1, h2;
        double comm = 0.0;
        do {
            h1 = random_hermitian(dim, rng);
            h2 = random_hermitian(dim, rng);
            comm = operator_norm(commutator(h1, h2));
        } while (comm < 0.25);
        min_obstruction = std::min(min_obstruction, comm);
        const HamiltonianField field(
            2, dim, [h1, h2](int j, const TimePoint&) { return j == 0 ? h1 : h2; });
        min_curved_gap = std::min(min_curved_gap, field_gap(field, 200 + f));
    }

    const bool pass = max_flat_gap <= kFlatTol && min_curved_gap >= kCurvedFloor &&
                      min_obstruction >= 0.1;
    report(1, pass,
           "path independence: 20 flat fields max gap " + fmt(max_flat_gap) + " (tol " +
               fmt(kFlatTol) + "), 20 curved fields min gap " + fmt(min_curved_gap) +
               " (floor " + fmt(kCurvedFloor) + ", min obstruction " + fmt(min_obstruction) +
               ")",
           timer.ms());
}

// --------------------------------------------------------------- check 2
// Loop-ordering defect of the sigma_x/sigma_z pair: the difference of the
// two edge orderings approaches -[H1,H2] dt^2, so the deviation-to-dt^2
// ratio decays with slope about one and the norm ratio approaches 2.

void check_loop_second_order() {
    constexpr double kSlopeFloor = 0.9;
    constexpr double kRatioBand = 0.05;
    Timer timer;
    const HamiltonianField field = make_pauli_pair_field();
    const TimePoint corner = TimePoint::Zero(2);
    const Operator comm = commutator(field.eval(0, corner), field.eval(1, corner));

    std::vector<double> log_dt, log_dev;
    double final_ratio = 0.0;
    for (int p = 4; p <= 10; ++p) {
        const double dt = std::ldexp(1.0, -p);
        const RectangleHolonomy h = rectangle_holonomy(field, corner, 0, 1, dt, 1);
        const double dev = operator_norm(h.difference + comm * dt * dt) / (dt * dt);
        log_dt.push_back(std::log(dt));
        log_dev.push_back(std::log(dev));
        final_ratio = operator_norm(h.difference) / (dt * dt);
    }
    // Least-squares slope of log(dev) against log(dt).
    const auto n = static_cast<double>(log_dt.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        sx += log_dt[i];
        sy += log_dev[i];
        sxx += log_dt[i] * log_dt[i];
        sxy += log_dt[i] * log_dev[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    const bool pass =
        slope >= kSlopeFloor && std::abs(final_ratio - 2.0) <= 2.0 * kRatioBand;
    report(2, pass,
           "second-order loop law: deviation slope " + fmt(slope) + " (floor " +
               fmt(kSlopeFloor) + "), limiting ratio " + fmt(final_ratio) + " (want 2 +/- " +
               fmt(2.0 * kRatioBand) + ")",
           timer.ms());
}

// --------------------------------------------------------------- check 3
// Boundary transport against the surface-ordered exponential on the unit
// square for a constant noncommuting field; the gap halves with the mesh.

void check_surface_transport() {
    constexpr double kGapTol = 1e-3;
    constexpr double kHalvingBand = 0.25;
    Timer timer;
    const Operator h1 = 0.4 * pauli_x(), h2 = 0.4 * pauli_z();
    const HamiltonianField field(2, 2,
                                 [h1, h2](int j, const TimePoint&) { return j == 0 ? h1 : h2; });
    const SurfacePatch patch = make_affine_patch(TimePoint::Zero(2), (TimePoint(2) << 1, 0).finished(),
                                                 (TimePoint(2) << 0, 1).finished());
    const double gap64 = stokes_compare(field, patch, 64).gap;
    const double gap128 = stokes_compare(field, patch, 128).gap;
    const double ratio = gap128 / gap64;
    const bool pass = gap128 <= kGapTol && std::abs(ratio - 0.5) <= 0.5 * kHalvingBand;
    report(3, pass,
           "surface transport: gap " + fmt(gap128) + " at mesh 128 (tol " + fmt(kGapTol) +
               "), halving ratio " + fmt(ratio) + " (want 0.5 +/- " +
               fmt(0.5 * kHalvingBand) + ")",
           timer.ms());
}

// --------------------------------------------------------------- check 4
// Two-particle Coulomb commutator on a frozen slice against its analytic
// gradient form, converging at fourth order under spacing halving.

void check_coulomb_commutator() {
    constexpr double kResidualTol = 1e-2;
    constexpr double kSlopeFloor = 3.5;
    constexpr double kExtent = 3.2;
    constexpr double kCharge = 0.5;
    constexpr double kWidth = 0.3;
    Timer timer;
    const Eigen::Vector3d c2(2.0, 0.0, 0.0);
    const auto psi = [c2](const Eigen::Vector3d& x1, const Eigen::Vector3d& x2) {
        return Complex(std::exp(-(x1.squaredNorm() + (x2 - c2).squaredNorm()) /
                                (2.0 * kWidth * kWidth)),
                       0.0);
    };
    const auto pot = [=](const Eigen::Vector3d& x1, const Eigen::Vector3d& x2) {
        return kCharge / (x1 - x2).norm();
    };
    PairFirstOrderOp rhs;
    rhs.grad1 = [=](const Eigen::Vector3d& x1, const Eigen::Vector3d& x2) {
        const Eigen::Vector3d d = x1 - x2;
        return Eigen::Vector3d(kCharge * d / std::pow(d.norm(), 3));
    };
    rhs.grad2 = rhs.grad1;

    const auto residual_at = [&](int n) {
        Grid g;
        g.space_dim = 3;
        g.points_per_axis = n;
        g.spacing = kExtent / n;
        g.origin = -kExtent / 2.0 + g.spacing / 2.0;
        g.boundary = Boundary::zero_padded;
        SliceSpec slice;
        slice.frozen_x2 = c2;
        slice.mass = 1.0;
        slice.stencil_order = 4;
        return schrodinger_pair_commutator_slice(g, slice, pot, psi, rhs);
    };
    const double r32 = residual_at(32);
    const double r64 = residual_at(64);
    const double slope = std::log2(r32 / r64);
    const bool pass = r32 <= kResidualTol && slope >= kSlopeFloor;
    report(4, pass,
           "Coulomb slice commutator: residual " + fmt(r32) + " at n=32 (tol " +
               fmt(kResidualTol) + "), refinement slope " + fmt(slope) + " (floor " +
               fmt(kSlopeFloor) + ")",
           timer.ms());
}

// --------------------------------------------------------------- check 5
// Order-of-evolution gap of two interacting 1D generators: near the
// first-order commutator estimate when the pair coupling is on, and at
// rounding level when it is off.

void add_pulse(GridFunction& f, long hw, long center, const Eigen::VectorXcd& spinor) {
    for (long c = center - hw; c <= center + hw; ++c) {
        const double u = static_cast<double>(c - center) / static_cast<double>(hw + 1);
        const double amp = std::cos(0.5 * kPi * u);
        const Complex ph = std::polar(amp * amp, 0.3 * static_cast<double>(c));
        for (int s = 0; s < spinor.size(); ++s)
            f.values()[f.index({c}, {s})] += ph * spinor[s];
    }
}

GridFunction two_pulse_state(const Grid& g, long hw, long center0, long center1) {
    GridFunction f(g, {2}), q(g, {2});
    Eigen::VectorXcd sa(2), sb(2);
    sa << Complex(1.0, 0.0), Complex(0.2, 0.5);
    sb << Complex(0.0, 0.7), Complex(1.0, 0.0);
    add_pulse(f, hw, center0, sa);
    add_pulse(q, hw, center1, sb);
    GridFunction psi(g, {2, 2});
    const long n = g.points_per_axis;
    for (long c1 = 0; c1 < n; ++c1)
        for (long c2 = 0; c2 < n; ++c2)
            for (int s1 = 0; s1 < 2; ++s1)
                for (int s2 = 0; s2 < 2; ++s2)
                    psi.values()[psi.index({c1, c2}, {s1, s2})] =
                        f.values()[f.index({c1}, {s1})] * q.values()[q.index({c2}, {s2})];
    psi.values() /= psi.norm();
    return psi;
}

void check_order_gap() {
    constexpr double kBandLo = 0.8;
    constexpr double kBandHi = 1.2;
    constexpr double kFreeTol = 1e-8;
    Timer timer;
    Grid g;
    g.space_dim = 1;
    g.points_per_axis = 128;
    g.spacing = 0.1 / 16.0;
    g.origin = -0.4;
    g.boundary = Boundary::zero_padded;
    const GridFunction psi = two_pulse_state(g, 20, 44, 84);

    PartialHamiltonianSpec a;
    a.particle = 0;
    a.kind = HamiltonianKind::dirac1d;
    a.mass = 0.4;
    a.stencil_order = 4;
    a.scalar_potential = [](const Eigen::VectorXd& x) {
        const double r = x[0] - x[1];
        return 0.5 * 0.9 * std::exp(-r * r / (2.0 * 0.8 * 0.8));
    };
    PartialHamiltonianSpec b = a;
    b.particle = 1;
    b.mass = 0.25;

    const OrderGapResult coupled = order_gap(a, b, psi, 0.1, 0.1, g.spacing);

    PartialHamiltonianSpec af = a, bf = b;
    af.scalar_potential = nullptr;
    bf.scalar_potential = nullptr;
    const OrderGapResult free_gap = order_gap(af, bf, psi, 0.1, 0.1, g.spacing);

    const bool pass = coupled.normalized >= kBandLo && coupled.normalized <= kBandHi &&
                      free_gap.gap <= kFreeTol;
    report(5, pass,
           "order-of-evolution gap: normalized " + fmt(coupled.normalized) + " (band [" +
               fmt(kBandLo) + ", " + fmt(kBandHi) + "]), decoupled gap " +
               fmt(free_gap.gap) + " (tol " + fmt(kFreeTol) + ")",
           timer.ms());
}

// --------------------------------------------------------------- check 6
// Gauge split: the phase recovered from a gradient-plus-external family
// matches the generating scalar; a split Coulomb family is flagged by a
// sizable spatial cross-derivative.

void check_gauge_split() {
    constexpr double kThetaTol = 1e-6;
    constexpr double kViolationFloor = 0.1;
    constexpr int kGridN = 64;
    Timer timer;

    const Polynomial g(2, {{1.0, {1, 1}}});  // t0 * t1
    std::vector<Polynomial> ext;
    ext.push_back(Polynomial(2, {{1.0, {0, 2}}}));
    ext.push_back(Polynomial(2, {{1.5, {0, 1}}}));
    const PotentialField v = make_gradient_gauge_potential(g, std::move(ext), 1);
    const TimeBox box{TimePoint::Zero(2), TimePoint::Constant(2, 1.0)};
    const GaugeDecomposition dec = gauge_decompose(v, box, kGridN, 1e-6);

    const double offset = dec.theta(box.lo) - box.lo[0] * box.lo[1];
    double theta_err = 0.0;
    for (int i = 0; i <= kGridN; ++i) {
        for (int j = 0; j <= kGridN; ++j) {
            TimePoint t(2);
            t << static_cast<double>(i) / kGridN, static_cast<double>(j) / kGridN;
            theta_err = std::max(theta_err, std::abs(dec.theta(t) - t[0] * t[1] - offset));
        }
    }

    // Split Coulomb pair probed at unit separation.
    const PotentialField coulomb = make_coulomb_split_potential(1.0);
    std::vector<Configuration> samples;
    for (int k = 0; k < 6; ++k) {
        Configuration c(2, 4);
        const double ang = 2.0 * kPi * k / 6.0;
        c.row(0) << 0.1 * k, 0.0, 0.0, 0.0;
        c.row(1) << -0.2 * k, std::cos(ang), std::sin(ang), 0.0;
        samples.push_back(c);
    }
    const RelationReport rep = relation_residuals(coulomb, samples, 1e-3);

    const bool pass = theta_err <= kThetaTol && rep.max_r2 >= kViolationFloor;
    report(6, pass,
           "gauge split: recovered phase error " + fmt(theta_err) + " (tol " + fmt(kThetaTol) +
               "), Coulomb cross-derivative " + fmt(rep.max_r2) + " (floor " +
               fmt(kViolationFloor) + ")",
           timer.ms());
}

// --------------------------------------------------------------- check 7
// Exact light cone of the 1D characteristic scheme over 500 steps, for
// masses 0 and 1, with and without a smooth potential: every amplitude
// strictly outside the one-cell-per-step cone is exactly zero.

void check_light_cone() {
    constexpr long kSteps = 500;
    Timer timer;
    Grid g;
    g.space_dim = 1;
    g.points_per_axis = 1280;
    g.spacing = 0.05;
    g.origin = -32.0;
    g.boundary = Boundary::zero_padded;
    const long lo = 632, hi = 648;

    bool all_zero = true;
    double worst = 0.0;
    int runs = 0;
    for (double mass : {0.0, 1.0}) {
        for (int with_pot = 0; with_pot < 2; ++with_pot) {
            GridFunction psi(g, {2});
            for (long c = lo; c <= hi; ++c) {
                psi.values()[psi.index({c}, {0})] = std::polar(1.0, 0.1 * static_cast<double>(c));
                psi.values()[psi.index({c}, {1})] = std::polar(0.5, -0.2 * static_cast<double>(c));
            }
            Dirac1dOptions opt;
            opt.mass = mass;
            if (with_pot)
                opt.scalar_potential = [](double x) {
                    return 0.8 * std::exp(-x * x / 2.0);
                };
            const auto rows =
                dirac1d_lightcone_scan(psi, kSteps * g.spacing, opt, lo, hi);
            ++runs;
            if (static_cast<long>(rows.size()) != kSteps) all_zero = false;
            for (const LightConeRow& r : rows) {
                worst = std::max(worst, r.max_outside);
                if (r.max_outside != 0.0) all_zero = false;
            }
        }
    }
    report(7, all_zero && runs == 4,
           "exact light cone: 4 runs x 500 steps, largest amplitude outside the cone " +
               fmt(worst) + " (want exactly 0)",
           timer.ms());
}

// --------------------------------------------------------------- check 8
// Cutoff multi-time construction, three particles on 64-cell grids with a
// finite-range pair coupling: single-family construction matches the
// joint single-time solver; the value is independent of the admissible
// partition and of the sweep order; switching the coupling off reproduces
// the free product evolution.

struct DeltaFixture {
    Grid grid;
    std::vector<long> centers{14, 30, 46};
    long hw = 4;
    std::vector<Eigen::VectorXcd> spinors;
    std::vector<double> masses{0.5, 0.7, 0.9};
    double delta = 0.8;

    DeltaFixture() {
        grid.space_dim = 1;
        grid.points_per_axis = 64;
        grid.spacing = 0.1;
        grid.origin = -3.2;
        grid.boundary = Boundary::zero_padded;
        Eigen::VectorXcd s0(2), s1(2), s2(2);
        s0 << Complex(1.0, 0.0), Complex(0.2, 0.5);
        s1 << Complex(0.0, 0.7), Complex(1.0, 0.0);
        s2 << Complex(0.6, 0.0), Complex(0.0, -0.4);
        spinors = {s0, s1, s2};
    }

    Eigen::VectorXcd pulse(int i) const {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(2 * grid.points_per_axis);
        for (long c = centers[i] - hw; c <= centers[i] + hw; ++c) {
            const double u = static_cast<double>(c - centers[i]) / static_cast<double>(hw + 1);
            const double amp = std::cos(0.5 * kPi * u);
            const Complex ph = std::polar(amp * amp, 0.3 * static_cast<double>(c));
            for (int s = 0; s < 2; ++s) v[2 * c + s] += ph * spinors[i][s];
        }
        return v;
    }

    GridFunction phi0() const {
        GridFunction out(grid, {2, 2, 2});
        const std::vector<Eigen::VectorXcd> p{pulse(0), pulse(1), pulse(2)};
        const long n = grid.points_per_axis;
        for (long c0 = 0; c0 < n; ++c0)
            for (long c1 = 0; c1 < n; ++c1)
                for (long c2 = 0; c2 < n; ++c2)
                    for (int s0 = 0; s0 < 2; ++s0)
                        for (int s1 = 0; s1 < 2; ++s1)
                            for (int s2 = 0; s2 < 2; ++s2)
                                out.values()[out.index({c0, c1, c2}, {s0, s1, s2})] =
                                    p[0][2 * c0 + s0] * p[1][2 * c1 + s1] * p[2][2 * c2 + s2];
        out.values() /= out.norm();
        return out;
    }

    PairPotential pair(bool interacting) const {
        PairPotential w;
        w.range = delta;
        if (interacting)
            w.profile = [](double r) {
                return Complex(1.5 * std::exp(-r * r / (2.0 * 0.25 * 0.25)), 0.0);
            };
        return w;
    }

    SpacetimeConfig target(const std::vector<double>& times) const {
        SpacetimeConfig q;
        for (std::size_t i = 0; i < times.size(); ++i) {
            Eigen::VectorXd x(1);
            x << grid.coord(centers[i]);
            q.points.push_back({times[i], x});
        }
        return q;
    }
};

void check_delta_construction() {
    constexpr double kSingleFamilyTol = 1e-10;
    constexpr double kOverlapTol = 1e-8;
    constexpr double kOrderTol = 1e-8;
    constexpr double kFreeTol = 1e-9;
    Timer timer;
    const DeltaFixture fx;
    const GridFunction phi0 = fx.phi0();
    const PairPotential w = fx.pair(true);
    ConstructionScheme scheme;
    scheme.masses = fx.masses;

    // (a) One family at a shared time against the joint single-time solver.
    const double T = 0.4;
    const ConstructPhiResult joint = construct_phi(phi0, fx.target({T, T, T}), w, scheme);
    NParticleOptions opt;
    opt.masses = fx.masses;
    opt.pair = w;
    const GridFunction direct = nparticle_dirac_evolve(phi0, {0, 1, 2}, T, opt);
    const double single_family_dev =
        (joint.slice.data.values() - direct.values()).cwiseAbs().maxCoeff();

    // (b)+(c) Two-family targets: value independent of the admissible
    // partition and of the sweep order.
    const std::vector<std::vector<double>> patterns{
        {0.2, 0.4, 0.4}, {0.4, 0.2, 0.4}, {0.4, 0.4, 0.2},
        {0.2, 0.2, 0.4}, {0.4, 0.2, 0.2}, {0.2, 0.4, 0.2}};
    double max_overlap = 0.0, max_order = 0.0;
    int n_multi = 0;
    for (const auto& times : patterns) {
        const SpacetimeConfig q = fx.target(times);
        if (admissible_partitions(q, fx.delta).size() >= 2) ++n_multi;
        max_overlap = std::max(max_overlap, overlap_welldefinedness(phi0, q, w, scheme));
        ConstructionScheme desc = scheme;
        desc.order = SweepOrder::time_descending;
        const ConstructPhiResult ra = construct_phi(phi0, q, w, scheme);
        const ConstructPhiResult rd = construct_phi(phi0, q, w, desc);
        max_order = std::max(max_order, (ra.value - rd.value).cwiseAbs().maxCoeff());
    }
    // Equal-time target: every partition of three particles is admissible.
    const SpacetimeConfig q_tied = fx.target({T, T, T});
    if (admissible_partitions(q_tied, fx.delta).size() >= 2) ++n_multi;
    max_overlap = std::max(max_overlap, overlap_welldefinedness(phi0, q_tied, w, scheme));

    // (d) Coupling off: free product evolution, particle by particle.
    const std::vector<double> free_times{0.2, 0.4, 0.4};
    const ConstructPhiResult free_built =
        construct_phi(phi0, fx.target(free_times), fx.pair(false), scheme);
    double norm_product = 1.0;
    std::vector<Eigen::VectorXcd> evolved;
    for (int i = 0; i < 3; ++i) {
        GridFunction f(fx.grid, {2});
        f.values() = fx.pulse(i);
        norm_product *= f.norm();
        Dirac1dOptions d;
        d.mass = fx.masses[static_cast<std::size_t>(i)];
        evolved.push_back(dirac1d_evolve(f, free_times[static_cast<std::size_t>(i)], d).values());
    }
    double free_dev = 0.0;
    const std::vector<long>& tc = free_built.target_cells;
    for (int s0 = 0; s0 < 2; ++s0)
        for (int s1 = 0; s1 < 2; ++s1)
            for (int s2 = 0; s2 < 2; ++s2) {
                const Complex expect = evolved[0][2 * tc[0] + s0] * evolved[1][2 * tc[1] + s1] *
                                       evolved[2][2 * tc[2] + s2] / norm_product;
                const Complex got = free_built.value[s0 * 4 + s1 * 2 + s2];
                free_dev = std::max(free_dev, std::abs(got - expect));
            }

    const bool pass = single_family_dev <= kSingleFamilyTol && n_multi == 7 &&
                      max_overlap <= kOverlapTol && max_order <= kOrderTol &&
                      free_dev <= kFreeTol;
    report(8, pass,
           "cutoff multi-time construction: single-family dev " + fmt(single_family_dev) +
               " (tol " + fmt(kSingleFamilyTol) + "), partition-overlap dev " +
               fmt(max_overlap) + " on " + std::to_string(n_multi) +
               " multi-partition targets (tol " + fmt(kOverlapTol) + "), sweep-order dev " +
               fmt(max_order) + " (tol " + fmt(kOrderTol) + "), free-reduction dev " +
               fmt(free_dev) + " (tol " + fmt(kFreeTol) + ")",
           timer.ms());
}

// --------------------------------------------------------------- check 9
// Admissible-partition enumeration against brute force over every
// partition, for up to five particles, plus the refinement bracket.

void check_partition_lattice() {
    constexpr double kDelta = 0.5;
    Timer timer;
    std::mt19937 rng(4711);
    std::uniform_real_distribution<double> pos(-6.0, 6.0);
    std::uniform_int_distribution<int> time_pick(0, 2);
    const double time_values[3] = {-0.4, 0.0, 0.5};

    bool pass = true;
    int checked = 0;
    for (int n = 1; n <= 5 && pass; ++n) {
        const std::vector<Partition> all = all_partitions(n);
        for (int rep = 0; rep < 100 && pass; ++rep) {
            SpacetimeConfig q;
            do {
                q.points.clear();
                for (int i = 0; i < n; ++i) {
                    Eigen::VectorXd x(1);
                    x << pos(rng);
                    q.points.push_back({time_values[time_pick(rng)], x});
                }
            } while (!is_delta_spacelike(q, kDelta, 1e-9));

            const std::vector<Partition> fast = admissible_partitions(q, kDelta);
            std::vector<Partition> brute;
            for (const Partition& p : all)
                if (in_S_delta_P(q, p, kDelta)) brute.push_back(p);

            if (fast.size() != brute.size()) {
                pass = false;
                break;
            }
            for (const Partition& p : brute) {
                bool found = false;
                for (const Partition& f : fast)
                    if (f == p) found = true;
                if (!found) pass = false;
            }

            const Partition coarsest = coarsest_partition(q);
            const Partition finest = finest_partition(q, kDelta);
            for (const Partition& p : fast)
                if (!finest.refines(p) || !p.refines(coarsest)) pass = false;
            if (!(fast.front() == coarsest) || !(fast.back() == finest)) pass = false;
            ++checked;
        }
    }
    report(9, pass,
           "partition lattice: " + std::to_string(checked) +
               "/500 random configurations match brute force with a valid refinement bracket",
           timer.ms());
}

}  // namespace

int main() {
    check_path_independence();
    check_loop_second_order();
    check_surface_transport();
    check_coulomb_commutator();
    check_order_gap();
    check_gauge_split();
    check_light_cone();
    check_delta_construction();
    check_partition_lattice();
    if (g_failures == 0) {
        std::printf("all 9 checks passed\n");
        return 0;
    }
    std::printf("%d of 9 checks failed\n", g_failures);
    return 1;
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "multitime/delta_model.hpp"
#include "multitime/errors.hpp"
#include "multitime/lattice.hpp"

using namespace multitime;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXcd spinor2(Complex a, Complex b) {
    Eigen::VectorXcd s(2);
    s << a, b;
    return s;
}

Eigen::VectorXd vec1(double x) {
    Eigen::VectorXd v(1);
    v << x;
    return v;
}

Eigen::VectorXd vec3(double x, double y, double z) {
    Eigen::VectorXd v(3);
    v << x, y, z;
    return v;
}

Grid grid1d(int n, double h, double origin, Boundary b) {
    Grid g;
    g.space_dim = 1;
    g.points_per_axis = n;
    g.spacing = h;
    g.origin = origin;
    g.boundary = b;
    return g;
}

SpacetimeConfig config1d(const std::vector<double>& ts, const std::vector<double>& xs) {
    SpacetimeConfig q;
    for (std::size_t j = 0; j < ts.size(); ++j) q.points.push_back({ts[j], vec1(xs[j])});
    return q;
}

// Compact C¹ bump on cells [center−hw, center+hw]: cos² profile times a
// cell-indexed phase ramp, exactly zero outside.
void add_pulse(GridFunction& f, int hw, int center, const Eigen::VectorXcd& spinor) {
    for (long c = center - hw; c <= center + hw; ++c) {
        const double u = static_cast<double>(c - center) / (hw + 1);
        const double amp = std::cos(0.5 * kPi * u);
        const Complex ph = std::polar(amp * amp, 0.3 * static_cast<double>(c));
        for (int s = 0; s < spinor.size(); ++s)
            f.values()[f.index({c}, {s})] += ph * spinor[s];
    }
}

// Same bump sampled from a fixed physical profile, so two grids of
// different spacing discretize one continuum state.
GridFunction sampled_pulse(const Grid& g, double x0, double w, double k,
                           const Eigen::VectorXcd& spinor) {
    GridFunction f(g, {2});
    for (long c = 0; c < g.points_per_axis; ++c) {
        const double x = g.coord(c);
        if (std::abs(x - x0) >= w) continue;
        const double a = std::cos(0.5 * kPi * (x - x0) / w);
        const Complex ph = std::polar(a * a, k * x);
        for (int s = 0; s < 2; ++s) f.values()[f.index({c}, {s})] += ph * spinor[s];
    }
    return f;
}

GridFunction tensor2(const GridFunction& a, const GridFunction& b) {
    GridFunction out(a.grid(), {2, 2});
    const long n = a.cells_per_particle();
    for (long c0 = 0; c0 < n; ++c0)
        for (long c1 = 0; c1 < n; ++c1)
            for (int s0 = 0; s0 < 2; ++s0)
                for (int s1 = 0; s1 < 2; ++s1)
                    out.values()[out.index({c0, c1}, {s0, s1})] =
                        a.values()[a.index({c0}, {s0})] * b.values()[b.index({c1}, {s1})];
    return out;
}

GridFunction tensor3(const GridFunction& a, const GridFunction& b, const GridFunction& c) {
    GridFunction out(a.grid(), {2, 2, 2});
    const long n = a.cells_per_particle();
    for (long c0 = 0; c0 < n; ++c0)
        for (long c1 = 0; c1 < n; ++c1)
            for (long c2 = 0; c2 < n; ++c2)
                for (int s0 = 0; s0 < 2; ++s0)
                    for (int s1 = 0; s1 < 2; ++s1)
                        for (int s2 = 0; s2 < 2; ++s2)
                            out.values()[out.index({c0, c1, c2}, {s0, s1, s2})] =
                                a.values()[a.index({c0}, {s0})] *
                                b.values()[b.index({c1}, {s1})] *
                                c.values()[c.index({c2}, {s2})];
    return out;
}

bool contains(const std::vector<Partition>& list, const Partition& p) {
    return std::find(list.begin(), list.end(), p) != list.end();
}

}  // namespace

TEST_CASE("partition canonical form and refinement") {
    Partition p(4, {{3, 1}, {0}, {2}});
    CHECK(p.n_particles() == 4);
    CHECK(p.n_blocks() == 3);
    CHECK(p.blocks()[0] == std::vector<int>{0});
    CHECK(p.blocks()[1] == std::vector<int>{1, 3});
    CHECK(p.blocks()[2] == std::vector<int>{2});
    CHECK(p == Partition(4, {{0}, {2}, {1, 3}}));
    CHECK(p != Partition(4, {{0, 2}, {1, 3}}));

    Partition one(4, {{0, 1, 2, 3}});
    Partition singles(4, {{0}, {1}, {2}, {3}});
    CHECK(p.refines(one));
    CHECK(singles.refines(p));
    CHECK_FALSE(p.refines(singles));
    CHECK(p.refines(p));
    CHECK_FALSE(one.refines(p));

    CHECK_THROWS_AS(Partition(3, {{0, 1}}), invalid_input_error);            // 2 missing
    CHECK_THROWS_AS(Partition(3, {{0, 1}, {1, 2}}), invalid_input_error);    // 1 repeated
    CHECK_THROWS_AS(Partition(3, {{0, 1, 2}, {}}), invalid_input_error);     // empty block
    CHECK_THROWS_AS(Partition(3, {{0, 1, 2, 3}}), invalid_input_error);      // out of range
    CHECK_THROWS_AS(Partition(0, {}), invalid_input_error);
    CHECK_THROWS_AS(p.refines(Partition(3, {{0, 1, 2}})), shape_error);
}

TEST_CASE("partition enumeration counts and order") {
    const std::vector<std::size_t> bell = {1, 2, 5, 15, 52};
    for (int n = 1; n <= 5; ++n) {
        auto all = all_partitions(n);
        CHECK(all.size() == bell[n - 1]);
        CHECK(all.front() == Partition(n, {[&] {
                  std::vector<int> b(n);
                  for (int i = 0; i < n; ++i) b[i] = i;
                  return b;
              }()}));
        std::vector<std::vector<int>> singles;
        for (int i = 0; i < n; ++i) singles.push_back({i});
        CHECK(all.back() == Partition(n, singles));
        for (std::size_t a = 0; a < all.size(); ++a)
            for (std::size_t b = a + 1; b < all.size(); ++b) CHECK(all[a] != all[b]);
    }
    CHECK_THROWS_AS(all_partitions(0), invalid_input_error);
    CHECK_THROWS_AS(all_partitions(11), invalid_input_error);
}

TEST_CASE("spacelike and delta-spacelike predicates") {
    // timelike pair: dt² − dx² = 0.16 − 0.04 > 0 and not a repeat
    CHECK_FALSE(is_spacelike(config1d({0.0, 0.4}, {0.0, 0.2})));
    // spacelike pair
    CHECK(is_spacelike(config1d({0.0, 0.4}, {0.0, 1.0})));
    // lightlike is not strict spacelike
    CHECK_FALSE(is_spacelike(config1d({0.0, 0.4}, {0.0, 0.4})));
    // exact repeat of the full spacetime point is allowed
    CHECK(is_spacelike(config1d({0.3, 0.3}, {1.0, 1.0})));
    // same position at different times is timelike
    CHECK_FALSE(is_spacelike(config1d({0.0, 0.1}, {1.0, 1.0})));

    // delta-spacelike needs distance strictly above |dt| + delta
    const double delta = 0.5, dt = 0.4;
    CHECK(is_delta_spacelike(config1d({0.0, dt}, {0.0, dt + delta + 0.01}), delta));
    CHECK_FALSE(is_delta_spacelike(config1d({0.0, dt}, {0.0, dt + delta}), delta));
    CHECK_FALSE(is_delta_spacelike(config1d({0.0, dt}, {0.0, dt + delta - 0.01}), delta));
    // equal times pass at any distance, even coincident
    CHECK(is_delta_spacelike(config1d({0.2, 0.2}, {0.0, 0.0}), delta));
    // margin tightens the bound
    CHECK(is_delta_spacelike(config1d({0.0, dt}, {0.0, dt + delta + 0.05}), delta, 0.0));
    CHECK_FALSE(is_delta_spacelike(config1d({0.0, dt}, {0.0, dt + delta + 0.05}), delta, 0.1));

    // 3D positions use the Euclidean distance
    SpacetimeConfig q3;
    q3.points.push_back({0.0, vec3(0.0, 0.0, 0.0)});
    q3.points.push_back({0.4, vec3(0.6, 0.8, 0.0)});  // distance 1.0 > 0.9
    CHECK(is_delta_spacelike(q3, delta));
    CHECK(is_spacelike(q3));
    q3.points[1].x = vec3(0.5, 0.0, 0.0);
    CHECK_FALSE(is_delta_spacelike(q3, delta));

    CHECK_THROWS_AS(is_delta_spacelike(q3, 0.0), invalid_input_error);
    CHECK_THROWS_AS(is_delta_spacelike(q3, -1.0), invalid_input_error);
    CHECK_THROWS_AS(is_delta_spacelike(q3, delta, -0.1), invalid_input_error);
    CHECK_THROWS_AS(is_spacelike(SpacetimeConfig{}), invalid_input_error);
}

TEST_CASE("stratum membership distinguishes block structure") {
    // two simultaneous pairs, 0.3 apart inside each pair, far across
    SpacetimeConfig q = config1d({0.0, 0.0, 0.3, 0.3}, {0.0, 0.3, 2.6, 2.9});
    const double delta = 0.5;
    CHECK(in_S_delta_P(q, Partition(4, {{0, 1}, {2, 3}}), delta));
    // splitting a close simultaneous pair fails the distance bound
    CHECK_FALSE(in_S_delta_P(q, Partition(4, {{0}, {1}, {2, 3}}), delta));
    // merging across unequal times fails the equal-time rule
    CHECK_FALSE(in_S_delta_P(q, Partition(4, {{0, 1, 2}, {3}}), delta));
    // margin applies to the cross-block bound: cross distance 2.3 vs 0.8
    CHECK(in_S_delta_P(q, Partition(4, {{0, 1}, {2, 3}}), delta, 1.0));
    CHECK_FALSE(in_S_delta_P(q, Partition(4, {{0, 1}, {2, 3}}), delta, 1.6));
    CHECK_THROWS_AS(in_S_delta_P(q, Partition(3, {{0, 1, 2}}), delta), shape_error);
}

TEST_CASE("coarsest, finest, and admissible partitions") {
    // three simultaneous particles (two chained close, one far) plus a
    // later simultaneous pair, everything delta-spacelike across times
    SpacetimeConfig q = config1d({0.0, 0.0, 0.0, 0.3, 0.3}, {0.0, 0.3, 1.2, 2.6, 2.9});
    const double delta = 0.5;
    REQUIRE(is_delta_spacelike(q, delta));

    const Partition coarse = coarsest_partition(q);
    const Partition fine = finest_partition(q, delta);
    CHECK(coarse == Partition(5, {{0, 1, 2}, {3, 4}}));
    CHECK(fine == Partition(5, {{0, 1}, {2}, {3, 4}}));
    CHECK(fine.refines(coarse));

    const auto adm = admissible_partitions(q, delta);
    REQUIRE(adm.size() == 2);
    CHECK(adm.front() == coarse);
    CHECK(adm.back() == fine);
    for (const auto& p : adm) {
        CHECK(fine.refines(p));
        CHECK(p.refines(coarse));
        CHECK(in_S_delta_P(q, p, delta));
    }
    CHECK_FALSE(in_S_delta_P(q, Partition(5, {{0}, {1}, {2}, {3, 4}}), delta));
    CHECK_FALSE(in_S_delta_P(q, Partition(5, {{0, 1}, {2, 3, 4}}), delta));

    CHECK_THROWS_AS(finest_partition(config1d({0.0, 0.4}, {0.0, 0.2}), delta),
                    invalid_input_error);
    CHECK_THROWS_AS(admissible_partitions(config1d({0.0, 0.4}, {0.0, 0.2}), delta),
                    invalid_input_error);
}

TEST_CASE("admissible partitions match a brute-force scan") {
    std::mt19937 rng(20260818);
    std::uniform_real_distribution<double> pos(-4.0, 4.0);
    const double times[3] = {0.0, 0.4, -0.4};
    const double delta = 0.7;
    for (int n = 3; n <= 5; ++n) {
        int accepted = 0, attempts = 0;
        while (accepted < 6 && attempts < 4000) {
            ++attempts;
            SpacetimeConfig q;
            for (int j = 0; j < n; ++j)
                q.points.push_back({times[rng() % 3], vec1(pos(rng))});
            if (!is_delta_spacelike(q, delta)) continue;
            ++accepted;

            std::vector<Partition> brute;
            for (const auto& p : all_partitions(n))
                if (in_S_delta_P(q, p, delta)) brute.push_back(p);
            const auto adm = admissible_partitions(q, delta);
            CHECK(adm.size() == brute.size());
            for (const auto& p : brute) CHECK(contains(adm, p));
            for (const auto& p : adm) CHECK(contains(brute, p));

            const Partition coarse = coarsest_partition(q);
            const Partition fine = finest_partition(q, delta);
            CHECK(contains(adm, coarse));
            CHECK(contains(adm, fine));
            for (const auto& p : adm) {
                CHECK(fine.refines(p));
                CHECK(p.refines(coarse));
            }
        }
        CHECK(accepted >= 3);
    }
}

TEST_CASE("single-stage construction matches the joint evolution") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 2, 30, spinor2(1.0, Complex(0.3, -0.2)));
    add_pulse(b, 2, 36, spinor2(0.5, 1.0));
    GridFunction phi0 = tensor2(a, b);
    phi0.values() /= phi0.norm();
    PairPotential pair{0.4, [](double r) { return Complex(2.0 * std::exp(-r * r / (2 * 0.2 * 0.2)), 0.0); }};
    ConstructionScheme sch{{0.4, 0.8}, SweepOrder::time_ascending, {}};

    // equal times: one stage, identical to evolving both particles jointly
    auto res = construct_phi(phi0, config1d({0.4, 0.4}, {-0.2, 0.4}), pair, sch);
    NParticleOptions opt;
    opt.masses = sch.masses;
    opt.pair = pair;
    GridFunction direct = nparticle_dirac_evolve(phi0, {0, 1}, 0.4, opt);
    CHECK((res.slice.data.values() - direct.values()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(res.slice.trace.size() == 1);
    CHECK(res.slice.trace[0].evolved == std::vector<int>{0, 1});
    CHECK(res.slice.partition == Partition(2, {{0, 1}}));
    REQUIRE(res.slice.family_times.size() == 1);
    CHECK(res.slice.family_times[0] == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(res.target_cells == std::vector<long>{30, 36});
    const long base = direct.index({30, 36}, {0, 0});
    for (int s = 0; s < 4; ++s) CHECK(res.value[s] == direct.values()[base + s]);

    // one particle: plain single-particle evolution
    GridFunction single(g, {2});
    add_pulse(single, 3, 32, spinor2(1.0, Complex(0.1, 0.6)));
    SpacetimeConfig t1;
    t1.points.push_back({0.5, vec1(0.2)});
    auto res1 = construct_phi(single, t1, PairPotential{0.4, nullptr},
                              {{0.7}, SweepOrder::time_ascending, {}});
    GridFunction direct1 = dirac1d_evolve(single, 0.5, {0.7, nullptr, nullptr});
    CHECK((res1.slice.data.values() - direct1.values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("free construction factorizes into single-particle evolutions") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 2, 25, spinor2(1.0, Complex(0.3, -0.2)));
    add_pulse(b, 2, 40, spinor2(0.5, 1.0));
    GridFunction phi0 = tensor2(a, b);
    PairPotential pair{0.5, nullptr};
    SpacetimeConfig target = config1d({0.3, 0.7}, {-0.8, 0.9});  // cells 24, 41

    GridFunction fa = dirac1d_evolve(a, 0.3, {0.4, nullptr, nullptr});
    GridFunction fb = dirac1d_evolve(b, 0.7, {0.8, nullptr, nullptr});
    GridFunction prod = tensor2(fa, fb);
    Eigen::VectorXcd expect(4);
    for (int s0 = 0; s0 < 2; ++s0)
        for (int s1 = 0; s1 < 2; ++s1)
            expect[2 * s0 + s1] =
                fa.values()[fa.index({24}, {s0})] * fb.values()[fb.index({41}, {s1})];

    for (SweepOrder ord : {SweepOrder::time_ascending, SweepOrder::time_descending}) {
        auto res = construct_phi(phi0, target, pair, {{0.4, 0.8}, ord, {}});
        CHECK((res.slice.data.values() - prod.values()).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((res.value - expect).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(res.slice.partition == Partition(2, {{0}, {1}}));
    }
}

TEST_CASE("sweep order changes nothing on the consistent domain") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 4, 30, spinor2(1.0, Complex(0.2, 0.5)));
    add_pulse(b, 4, 34, spinor2(Complex(0.0, 0.7), 1.0));
    GridFunction phi0 = tensor2(a, b);
    phi0.values() /= phi0.norm();
    // pulses overlap inside the interaction range, so the pair term acts
    PairPotential pair{0.5, [](double r) { return Complex(1.3 * std::exp(-r * r / (2 * 0.15 * 0.15)), 0.0); }};
    SpacetimeConfig target = config1d({0.3, 0.7}, {-0.6, 0.8});
    auto ra = construct_phi(phi0, target, pair, {{0.6, 0.9}, SweepOrder::time_ascending, {}});
    auto rd = construct_phi(phi0, target, pair, {{0.6, 0.9}, SweepOrder::time_descending, {}});

    CHECK(ra.value.cwiseAbs().maxCoeff() > 0.1);
    CHECK((ra.value - rd.value).cwiseAbs().maxCoeff() <= 1e-8);

    // the two sweeps agree at every delta-spacelike joint cell and are
    // free to disagree elsewhere: the function is only defined there
    double dev_space = 0.0, dev_rest = 0.0;
    long n_space = 0;
    for (long c0 = 0; c0 < 64; ++c0)
        for (long c1 = 0; c1 < 64; ++c1) {
            double d = 0.0;
            for (int s = 0; s < 4; ++s) {
                const long i = ra.slice.data.index({c0, c1}, {s / 2, s % 2});
                d = std::max(d,
                             std::abs(ra.slice.data.values()[i] - rd.slice.data.values()[i]));
            }
            if (0.1 * std::abs(c0 - c1) > 0.4 + 0.5) {
                dev_space = std::max(dev_space, d);
                ++n_space;
            } else {
                dev_rest = std::max(dev_rest, d);
            }
        }
    CHECK(n_space > 2000);
    CHECK(dev_space <= 1e-8);
    CHECK(dev_rest > 1e-3);
}

TEST_CASE("construction value is local to the dependency cone") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 4, 30, spinor2(1.0, Complex(0.2, 0.5)));
    add_pulse(b, 4, 34, spinor2(Complex(0.0, 0.7), 1.0));
    GridFunction phi0 = tensor2(a, b);
    phi0.values() /= phi0.norm();
    PairPotential pair{0.5, [](double r) { return Complex(1.3 * std::exp(-r * r / (2 * 0.15 * 0.15)), 0.0); }};
    SpacetimeConfig target = config1d({0.3, 0.7}, {-0.6, 0.8});  // cells 26, 40: 3 and 7 steps
    ConstructionScheme sch{{0.6, 0.9}, SweepOrder::time_ascending, {}};
    const Eigen::VectorXcd v0 = construct_phi(phi0, target, pair, sch).value;

    // outside either particle's cone the value cannot change at all
    GridFunction out0 = phi0;
    out0.values()[out0.index({31, 40}, {0, 1})] += Complex(0.3, -0.1);  // |31−26| = 5 > 3
    CHECK((construct_phi(out0, target, pair, sch).value - v0).cwiseAbs().maxCoeff() == 0.0);
    GridFunction out1 = phi0;
    out1.values()[out1.index({26, 48}, {1, 0})] += Complex(0.2, 0.4);  // |48−40| = 8 > 7
    CHECK((construct_phi(out1, target, pair, sch).value - v0).cwiseAbs().maxCoeff() == 0.0);

    // inside both cones (parity matching the step counts) it does
    GridFunction in = phi0;
    in.values()[in.index({27, 41}, {0, 0})] += Complex(0.3, -0.1);
    CHECK((construct_phi(in, target, pair, sch).value - v0).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("tie families merge regardless of the forced partition") {
    Grid g = grid1d(32, 0.1, -1.6, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2}), c(g, {2});
    add_pulse(a, 2, 6, spinor2(1.0, 0.4));
    add_pulse(b, 2, 15, spinor2(Complex(0.2, 0.8), 1.0));
    add_pulse(c, 2, 24, spinor2(1.0, Complex(-0.5, 0.1)));
    GridFunction phi0 = tensor3(a, b, c);
    phi0.values() /= phi0.norm();
    PairPotential pair{0.3, [](double r) { return Complex(1.5 * std::exp(-r * r / (2 * 0.12 * 0.12)), 0.0); }};
    SpacetimeConfig target = config1d({0.2, 0.4, 0.4}, {-1.0, -0.1, 0.8});
    ConstructionScheme sch{{0.5, 0.7, 0.9}, SweepOrder::time_ascending, {}};

    auto merged = construct_phi(phi0, target, pair, sch);
    CHECK(merged.slice.partition == Partition(3, {{0}, {1, 2}}));
    REQUIRE(merged.slice.family_times.size() == 2);
    CHECK(merged.slice.family_times[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(merged.slice.family_times[1] == doctest::Approx(0.4).epsilon(1e-12));

    ConstructionScheme forced = sch;
    forced.force_partition = Partition(3, {{0}, {1}, {2}});
    auto split = construct_phi(phi0, target, pair, forced);
    CHECK(split.slice.partition == Partition(3, {{0}, {1}, {2}}));
    CHECK(split.slice.family_times == std::vector<double>{0.2, 0.4, 0.4});
    // the sweep is set by the time values, so the data is bit-identical
    CHECK((merged.slice.data.values() - split.slice.data.values()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((merged.value - split.value).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("overlap deviation vanishes for interacting tied families") {
    Grid g = grid1d(32, 0.1, -1.6, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2}), c(g, {2});
    add_pulse(a, 2, 6, spinor2(1.0, 0.4));
    add_pulse(b, 2, 15, spinor2(Complex(0.2, 0.8), 1.0));
    add_pulse(c, 2, 24, spinor2(1.0, Complex(-0.5, 0.1)));
    GridFunction phi0 = tensor3(a, b, c);
    phi0.values() /= phi0.norm();
    PairPotential pair{0.3, [](double r) { return Complex(1.5 * std::exp(-r * r / (2 * 0.12 * 0.12)), 0.0); }};
    SpacetimeConfig target = config1d({0.2, 0.4, 0.4}, {-1.0, -0.1, 0.8});
    ConstructionScheme sch{{0.5, 0.7, 0.9}, SweepOrder::time_ascending, {}};

    REQUIRE(admissible_partitions(target, 0.3).size() == 2);
    const double dev = overlap_welldefinedness(phi0, target, pair, sch);
    CHECK(dev <= 1e-8);
    CHECK(dev == 0.0);

    // a single admissible partition reports zero by convention
    GridFunction ab = tensor2(a, b);
    ab.values() /= ab.norm();
    SpacetimeConfig tied = config1d({0.2, 0.2}, {-1.0, -0.1});
    CHECK(overlap_welldefinedness(ab, tied, pair, {{0.5, 0.7}, SweepOrder::time_ascending, {}}) ==
          0.0);
}

TEST_CASE("time derivative matches the family generator") {
    // three particles: a tied interacting pair and a later free family
    Grid g = grid1d(48, 0.1, -2.4, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2}), c(g, {2});
    add_pulse(a, 2, 16, spinor2(1.0, Complex(0.3, 0.4)));
    add_pulse(b, 2, 20, spinor2(Complex(0.6, -0.1), 1.0));
    add_pulse(c, 2, 36, spinor2(1.0, 0.7));
    GridFunction phi0 = tensor3(a, b, c);
    phi0.values() /= phi0.norm();
    const double s = 0.05, amp = 1.5;  // narrow, so the cutoff changes nothing measurable
    PairPotential pair{0.5, [=](double r) { return Complex(amp * std::exp(-r * r / (2 * s * s)), 0.0); }};
    ConstructionScheme sch{{0.5, 0.7, 0.9}, SweepOrder::time_ascending, {}};
    const std::vector<double> xs = {-0.9, -0.3, 1.2};
    const double h = 0.1;

    auto value_at = [&](double t1, double t2) {
        return construct_phi(phi0, config1d({t1, t1, t2}, xs), pair, sch);
    };
    auto center = value_at(0.2, 0.6);
    const long base = center.slice.data.index(center.target_cells, {0, 0, 0});

    // tied family {0,1}: free parts plus both ordered pair terms
    PartialHamiltonianSpec h0;
    h0.particle = 0;
    h0.kind = HamiltonianKind::dirac1d;
    h0.mass = 0.5;
    h0.stencil_order = 4;
    h0.scalar_potential = [=](const Eigen::VectorXd& q) {
        const double r = q[0] - q[1];
        return 2.0 * amp * std::exp(-r * r / (2 * s * s));
    };
    PartialHamiltonianSpec h1;
    h1.particle = 1;
    h1.kind = HamiltonianKind::dirac1d;
    h1.mass = 0.7;
    h1.stencil_order = 4;
    Eigen::VectorXcd hval = apply_hamiltonian(h0, center.slice.data).values().segment(base, 8) +
                            apply_hamiltonian(h1, center.slice.data).values().segment(base, 8);
    Eigen::VectorXcd fd =
        Complex(0.0, 1.0) * (value_at(0.3, 0.6).value - value_at(0.1, 0.6).value) / (2 * h);
    CHECK((fd - hval).cwiseAbs().maxCoeff() <= 10.0 * (h + h));  // measured 0.64

    // singleton family {2}: its free part alone
    PartialHamiltonianSpec h2;
    h2.particle = 2;
    h2.kind = HamiltonianKind::dirac1d;
    h2.mass = 0.9;
    h2.stencil_order = 4;
    Eigen::VectorXcd hval2 = apply_hamiltonian(h2, center.slice.data).values().segment(base, 8);
    Eigen::VectorXcd fd2 =
        Complex(0.0, 1.0) * (value_at(0.2, 0.7).value - value_at(0.2, 0.5).value) / (2 * h);
    CHECK((fd2 - hval2).cwiseAbs().maxCoeff() <= 0.05 * (h + h));  // measured 2.6e-3
}

TEST_CASE("time derivative residual shrinks under joint refinement") {
    auto residual = [](int n) {
        const double h = 6.4 / n;
        Grid g = grid1d(n, h, -3.2, Boundary::zero_padded);
        GridFunction a = sampled_pulse(g, -0.7, 1.0, 1.3, spinor2(1.0, Complex(0.4, 0.2)));
        GridFunction b = sampled_pulse(g, 0.9, 1.0, -0.9, spinor2(Complex(0.0, 0.6), 1.0));
        GridFunction phi0 = tensor2(a, b);
        phi0.values() /= phi0.norm();
        PairPotential pair{0.5, nullptr};
        ConstructionScheme sch{{0.7, 1.1}, SweepOrder::time_ascending, {}};
        auto value_at = [&](double t1) {
            return construct_phi(phi0, config1d({t1, 0.5}, {-0.6, 1.0}), pair, sch);
        };
        auto center = value_at(0.2);
        PartialHamiltonianSpec h0;
        h0.particle = 0;
        h0.kind = HamiltonianKind::dirac1d;
        h0.mass = 0.7;
        h0.stencil_order = 4;
        const long base = center.slice.data.index(center.target_cells, {0, 0});
        Eigen::VectorXcd hval = apply_hamiltonian(h0, center.slice.data).values().segment(base, 4);
        Eigen::VectorXcd fd =
            Complex(0.0, 1.0) * (value_at(0.2 + h).value - value_at(0.2 - h).value) / (2 * h);
        return std::make_pair((fd - hval).cwiseAbs().maxCoeff(), h);
    };
    auto [r64, h64] = residual(64);
    auto [r128, h128] = residual(128);
    CHECK(r64 <= 0.4 * (h64 + h64));    // measured 2.48e-2 vs 0.08
    CHECK(r128 <= 0.4 * (h128 + h128));  // measured 6.37e-3 vs 0.04
    CHECK(r128 <= 0.6 * r64);            // measured ratio 0.257
}

TEST_CASE("zero-time targets return the initial state") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 2, 25, spinor2(1.0, 0.3));
    add_pulse(b, 2, 40, spinor2(0.5, 1.0));
    GridFunction phi0 = tensor2(a, b);
    PairPotential pair{0.5, [](double r) { return Complex(std::exp(-r * r), 0.0); }};
    for (SweepOrder ord : {SweepOrder::time_ascending, SweepOrder::time_descending}) {
        auto res = construct_phi(phi0, config1d({0.0, 0.0}, {-0.7, 0.8}), pair,
                                 {{0.4, 0.8}, ord, {}});
        CHECK((res.slice.data.values() - phi0.values()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(res.slice.trace.empty());
        const long base = phi0.index({25, 40}, {0, 0});
        for (int s = 0; s < 4; ++s) CHECK(res.value[s] == phi0.values()[base + s]);
    }
}

TEST_CASE("construction trace records family stages") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 4, 30, spinor2(1.0, Complex(0.2, 0.5)));
    add_pulse(b, 4, 34, spinor2(Complex(0.0, 0.7), 1.0));
    GridFunction phi0 = tensor2(a, b);
    phi0.values() /= phi0.norm();
    PairPotential pair{0.5, [](double r) { return Complex(1.3 * std::exp(-r * r / (2 * 0.15 * 0.15)), 0.0); }};
    SpacetimeConfig target = config1d({0.3, 0.7}, {-0.6, 0.8});

    auto asc = construct_phi(phi0, target, pair, {{0.6, 0.9}, SweepOrder::time_ascending, {}});
    REQUIRE(asc.slice.trace.size() == 2);
    CHECK(asc.slice.trace[0].from_time == 0.0);
    CHECK(asc.slice.trace[0].to_time == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(asc.slice.trace[0].evolved == std::vector<int>{0, 1});
    CHECK(asc.slice.trace[1].from_time == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(asc.slice.trace[1].to_time == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(asc.slice.trace[1].evolved == std::vector<int>{1});
    for (const auto& st : asc.slice.trace)
        CHECK(std::abs(st.norm_after - phi0.norm()) <= 1e-9 * phi0.norm());

    auto desc = construct_phi(phi0, target, pair, {{0.6, 0.9}, SweepOrder::time_descending, {}});
    REQUIRE(desc.slice.trace.size() == 2);
    CHECK(desc.slice.trace[0].to_time == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(desc.slice.trace[0].evolved == std::vector<int>{0, 1});
    CHECK(desc.slice.trace[1].to_time == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(desc.slice.trace[1].evolved == std::vector<int>{0});
}

TEST_CASE("targets snap to cells and times to steps") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 2, 25, spinor2(1.0, 0.3));
    add_pulse(b, 2, 40, spinor2(0.5, 1.0));
    GridFunction phi0 = tensor2(a, b);
    PairPotential pair{0.5, nullptr};
    ConstructionScheme sch{{0.4, 0.8}, SweepOrder::time_ascending, {}};

    auto exact = construct_phi(phi0, config1d({0.3, 0.7}, {-0.8, 0.9}), pair, sch);
    // off-center positions and a time off by 1e-12 snap to the same run
    auto snapped = construct_phi(phi0, config1d({0.3, 0.7 + 1e-12}, {-0.78, 0.88}), pair, sch);
    CHECK(snapped.target_cells == exact.target_cells);
    CHECK((snapped.value - exact.value).cwiseAbs().maxCoeff() == 0.0);
    CHECK((snapped.slice.data.values() - exact.slice.data.values()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("construction input validation") {
    Grid g = grid1d(64, 0.1, -3.2, Boundary::zero_padded);
    GridFunction a(g, {2}), b(g, {2});
    add_pulse(a, 2, 25, spinor2(1.0, 0.3));
    add_pulse(b, 2, 40, spinor2(0.5, 1.0));
    GridFunction phi0 = tensor2(a, b);
    PairPotential pair{0.5, nullptr};
    ConstructionScheme sch{{0.4, 0.8}, SweepOrder::time_ascending, {}};
    SpacetimeConfig ok = config1d({0.3, 0.7}, {-0.8, 0.9});

    // targets that are not delta-spacelike after snapping
    CHECK_THROWS_AS(construct_phi(phi0, config1d({0.0, 0.4}, {-0.6, -0.4}), pair, sch),
                    invalid_input_error);
    // time not a step multiple
    CHECK_THROWS_WITH_AS(
        construct_phi(phi0, config1d({0.25, 0.7}, {-0.8, 0.9}), pair, sch),
        "construct_phi: family time 0.25 of particle 0 must be an integer multiple of the grid "
        "spacing 0.1",
        invalid_input_error);
    // position outside the box
    CHECK_THROWS_AS(construct_phi(phi0, config1d({0.3, 0.7}, {-0.8, 9.9}), pair, sch),
                    invalid_input_error);
    // wrong mass count
    CHECK_THROWS_AS(construct_phi(phi0, ok, pair, {{0.4}, SweepOrder::time_ascending, {}}),
                    invalid_input_error);
    // the cutoff range sets delta and must be positive even when free
    CHECK_THROWS_AS(construct_phi(phi0, ok, PairPotential{0.0, nullptr}, sch),
                    invalid_input_error);
    CHECK_THROWS_AS(construct_phi(phi0, ok, PairPotential{-0.5, nullptr}, sch),
                    invalid_input_error);
    // particle count mismatch between target and state
    CHECK_THROWS_AS(construct_phi(phi0, config1d({0.3}, {-0.8}), pair, sch), shape_error);
    // 3D targets cannot address a 1D state
    SpacetimeConfig q3;
    q3.points.push_back({0.3, vec3(0.0, 0.0, 0.0)});
    q3.points.push_back({0.7, vec3(2.0, 0.0, 0.0)});
    CHECK_THROWS_AS(construct_phi(phi0, q3, pair, sch), invalid_input_error);
    // forced partitions must have the right size and contain the target
    {
        ConstructionScheme forced = sch;
        forced.force_partition = Partition(3, {{0}, {1}, {2}});
        CHECK_THROWS_AS(construct_phi(phi0, ok, pair, forced), shape_error);
        forced.force_partition = Partition(2, {{0, 1}});  // unequal times in one block
        CHECK_THROWS_AS(construct_phi(phi0, ok, pair, forced), invalid_input_error);
    }
    // non-finite target data
    SpacetimeConfig bad = ok;
    bad.points[0].t = std::nan("");
    CHECK_THROWS_AS(construct_phi(phi0, bad, pair, sch), invalid_input_error);
    // overlap applies the same validation
    CHECK_THROWS_AS(overlap_welldefinedness(phi0, ok, PairPotential{0.0, nullptr}, sch),
                    invalid_input_error);
}

#include "multitime/delta_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>

#include "multitime/errors.hpp"

namespace multitime {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

// Validates particle count, finite times, and a shared 1D or 3D spatial
// dimension; returns that dimension.
long check_config(const SpacetimeConfig& q, const char* what) {
    if (q.points.empty())
        throw invalid_input_error(std::string(what) + ": configuration has no particles");
    const long d = q.points.front().x.size();
    if (d != 1 && d != 3)
        throw invalid_input_error(std::string(what) + ": positions must have 1 or 3 components, got " +
                                  std::to_string(d));
    for (std::size_t j = 0; j < q.points.size(); ++j) {
        const SpacetimePoint& p = q.points[j];
        if (!std::isfinite(p.t))
            throw invalid_input_error(std::string(what) + ": time of particle " + std::to_string(j) +
                                      " is not finite");
        if (p.x.size() != d)
            throw shape_error(std::string(what) + ": position of particle " + std::to_string(j) +
                              " has " + std::to_string(p.x.size()) + " components, expected " +
                              std::to_string(d));
        if (!p.x.allFinite())
            throw invalid_input_error(std::string(what) + ": position of particle " +
                                      std::to_string(j) + " is not finite");
    }
    return d;
}

void check_delta(double delta, const char* what) {
    if (!(std::isfinite(delta) && delta > 0.0))
        throw invalid_input_error(std::string(what) + ": cutoff range must be positive, got " +
                                  fmt(delta));
}

void check_margin(double margin, const char* what) {
    if (!(std::isfinite(margin) && margin >= 0.0))
        throw invalid_input_error(std::string(what) + ": margin must be finite and nonnegative, got " +
                                  fmt(margin));
}

// Block label per particle, for pair classification.
std::vector<int> block_labels(const Partition& p) {
    std::vector<int> label(p.n_particles(), 0);
    const auto& blocks = p.blocks();
    for (std::size_t a = 0; a < blocks.size(); ++a)
        for (int m : blocks[a]) label[m] = static_cast<int>(a);
    return label;
}

// Every grouping of m items as restricted growth strings in ascending
// lexicographic order: the one-block grouping first, singletons last.
std::vector<std::vector<int>> growth_strings(int m) {
    std::vector<std::vector<int>> out;
    std::vector<int> a(m, 0);
    while (true) {
        out.push_back(a);
        int i = m - 1;
        for (; i > 0; --i) {
            int mx = 0;
            for (int k = 0; k < i; ++k) mx = std::max(mx, a[k]);
            if (a[i] <= mx) break;
        }
        if (i == 0) break;
        ++a[i];
        std::fill(a.begin() + i + 1, a.end(), 0);
    }
    return out;
}

}  // namespace

Partition::Partition(int n_particles, std::vector<std::vector<int>> blocks)
    : n_(n_particles), blocks_(std::move(blocks)) {
    if (n_ < 1)
        throw invalid_input_error("partition needs at least one particle, got " +
                                  std::to_string(n_));
    std::vector<char> seen(n_, 0);
    for (auto& b : blocks_) {
        if (b.empty()) throw invalid_input_error("partition blocks must be non-empty");
        for (int m : b) {
            if (m < 0 || m >= n_)
                throw invalid_input_error("partition member " + std::to_string(m) +
                                          " outside [0, " + std::to_string(n_) + ")");
            if (seen[m])
                throw invalid_input_error("particle " + std::to_string(m) +
                                          " appears in more than one partition block");
            seen[m] = 1;
        }
        std::sort(b.begin(), b.end());
    }
    for (int m = 0; m < n_; ++m)
        if (!seen[m])
            throw invalid_input_error("particle " + std::to_string(m) +
                                      " is missing from the partition");
    std::sort(blocks_.begin(), blocks_.end(),
              [](const std::vector<int>& a, const std::vector<int>& b) {
                  return a.front() < b.front();
              });
}

bool Partition::refines(const Partition& coarser) const {
    if (n_ != coarser.n_)
        throw shape_error("refines: partitions of " + std::to_string(n_) + " and " +
                          std::to_string(coarser.n_) + " particles");
    const std::vector<int> label = block_labels(coarser);
    for (const auto& b : blocks_)
        for (std::size_t i = 1; i < b.size(); ++i)
            if (label[b[i]] != label[b.front()]) return false;
    return true;
}

std::vector<Partition> all_partitions(int n_particles) {
    if (n_particles < 1 || n_particles > 10)
        throw invalid_input_error("all_partitions supports 1 to 10 particles, got " +
                                  std::to_string(n_particles));
    std::vector<Partition> out;
    for (const auto& a : growth_strings(n_particles)) {
        const int n_blocks = *std::max_element(a.begin(), a.end()) + 1;
        std::vector<std::vector<int>> blocks(n_blocks);
        for (int i = 0; i < n_particles; ++i) blocks[a[i]].push_back(i);
        out.emplace_back(n_particles, std::move(blocks));
    }
    return out;
}

bool is_spacelike(const SpacetimeConfig& q) {
    check_config(q, "is_spacelike");
    const int n = q.n_particles();
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            const SpacetimePoint& pj = q.points[j];
            const SpacetimePoint& pk = q.points[k];
            const double dt = pj.t - pk.t;
            const double dist = (pj.x - pk.x).norm();
            if (dt * dt - dist * dist < 0.0) continue;
            if (pj.t == pk.t && (pj.x.array() == pk.x.array()).all()) continue;
            return false;
        }
    return true;
}

bool is_delta_spacelike(const SpacetimeConfig& q, double delta, double margin) {
    check_config(q, "is_delta_spacelike");
    check_delta(delta, "is_delta_spacelike");
    check_margin(margin, "is_delta_spacelike");
    const int n = q.n_particles();
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            const SpacetimePoint& pj = q.points[j];
            const SpacetimePoint& pk = q.points[k];
            if (pj.t == pk.t) continue;
            const double dist = (pj.x - pk.x).norm();
            if (!(dist > std::abs(pj.t - pk.t) + delta + margin)) return false;
        }
    return true;
}

bool in_S_delta_P(const SpacetimeConfig& q, const Partition& p, double delta, double margin) {
    check_config(q, "in_S_delta_P");
    check_delta(delta, "in_S_delta_P");
    check_margin(margin, "in_S_delta_P");
    if (p.n_particles() != q.n_particles())
        throw shape_error("in_S_delta_P: partition of " + std::to_string(p.n_particles()) +
                          " particles does not match a configuration of " +
                          std::to_string(q.n_particles()));
    const std::vector<int> label = block_labels(p);
    const int n = q.n_particles();
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            const SpacetimePoint& pj = q.points[j];
            const SpacetimePoint& pk = q.points[k];
            if (label[j] == label[k]) {
                if (pj.t != pk.t) return false;
            } else {
                const double dist = (pj.x - pk.x).norm();
                if (!(dist > std::abs(pj.t - pk.t) + delta + margin)) return false;
            }
        }
    return true;
}

Partition coarsest_partition(const SpacetimeConfig& q) {
    check_config(q, "coarsest_partition");
    const int n = q.n_particles();
    std::vector<std::vector<int>> blocks;
    std::map<double, std::size_t> class_at;
    for (int j = 0; j < n; ++j) {
        auto [it, fresh] = class_at.try_emplace(q.points[j].t, blocks.size());
        if (fresh) blocks.emplace_back();
        blocks[it->second].push_back(j);
    }
    return Partition(n, std::move(blocks));
}

Partition finest_partition(const SpacetimeConfig& q, double delta) {
    check_config(q, "finest_partition");
    check_delta(delta, "finest_partition");
    if (!is_delta_spacelike(q, delta))
        throw invalid_input_error("finest_partition: configuration is not delta-spacelike for range " +
                                  fmt(delta));
    const int n = q.n_particles();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](int i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            const double dist = (q.points[j].x - q.points[k].x).norm();
            if (dist <= std::abs(q.points[j].t - q.points[k].t) + delta)
                parent[find(j)] = find(k);
        }
    std::map<int, std::size_t> root_block;
    std::vector<std::vector<int>> blocks;
    for (int j = 0; j < n; ++j) {
        auto [it, fresh] = root_block.try_emplace(find(j), blocks.size());
        if (fresh) blocks.emplace_back();
        blocks[it->second].push_back(j);
    }
    return Partition(n, std::move(blocks));
}

std::vector<Partition> admissible_partitions(const SpacetimeConfig& q, double delta) {
    if (q.n_particles() > 10)
        throw invalid_input_error("admissible_partitions supports up to 10 particles, got " +
                                  std::to_string(q.n_particles()));
    const Partition fine = finest_partition(q, delta);
    const Partition coarse = coarsest_partition(q);
    const std::vector<int> class_of = block_labels(coarse);

    // Atoms (finest blocks) never straddle an equal-time class: a linked
    // pair with distinct times would violate the delta-spacelike bound
    // already checked above. Group the atoms by class.
    std::vector<std::vector<int>> atoms_in_class(coarse.n_blocks());
    for (std::size_t i = 0; i < fine.blocks().size(); ++i)
        atoms_in_class[class_of[fine.blocks()[i].front()]].push_back(static_cast<int>(i));

    // Per class, every grouping of its atoms; the admissible partitions
    // are exactly the products of one grouping per class.
    std::vector<std::vector<std::vector<std::vector<int>>>> choices;
    for (const auto& atoms : atoms_in_class) {
        std::vector<std::vector<std::vector<int>>> per_class;
        for (const auto& rgs : growth_strings(static_cast<int>(atoms.size()))) {
            const int n_groups = *std::max_element(rgs.begin(), rgs.end()) + 1;
            std::vector<std::vector<int>> grouped(n_groups);
            for (std::size_t i = 0; i < atoms.size(); ++i) {
                const auto& members = fine.blocks()[atoms[i]];
                grouped[rgs[i]].insert(grouped[rgs[i]].end(), members.begin(), members.end());
            }
            per_class.push_back(std::move(grouped));
        }
        choices.push_back(std::move(per_class));
    }

    // Odometer over the per-class choices, the first class slowest, so
    // the all-merged (coarsest) product comes first and the all-split
    // (finest) product last.
    std::vector<Partition> out;
    std::vector<std::size_t> pick(choices.size(), 0);
    while (true) {
        std::vector<std::vector<int>> blocks;
        for (std::size_t c = 0; c < choices.size(); ++c)
            for (const auto& b : choices[c][pick[c]]) blocks.push_back(b);
        out.emplace_back(q.n_particles(), std::move(blocks));
        std::size_t c = choices.size();
        while (c > 0) {
            --c;
            if (++pick[c] < choices[c].size()) break;
            pick[c] = 0;
            if (c == 0) return out;
        }
    }
}

namespace {

// Target with positions snapped to cell centers and times converted to
// whole steps; config holds the canonical coordinates.
struct CanonicalTarget {
    std::vector<long> cells;
    std::vector<long> steps;
    SpacetimeConfig config;
};

CanonicalTarget canonicalize_target(const GridFunction& phi0, const SpacetimeConfig& target,
                                    double delta, const char* what) {
    const Grid& g = phi0.grid();
    if (g.space_dim != 1)
        throw invalid_input_error(std::string(what) + ": state must live on a 1D grid");
    for (int j = 0; j < phi0.n_particles(); ++j)
        if (phi0.spin_dims()[j] != 2)
            throw invalid_input_error(std::string(what) + ": particle " + std::to_string(j) +
                                      " needs 2 spin components, has " +
                                      std::to_string(phi0.spin_dims()[j]));
    const long d = check_config(target, what);
    if (target.n_particles() != phi0.n_particles())
        throw shape_error(std::string(what) + ": target lists " +
                          std::to_string(target.n_particles()) + " particles, the state has " +
                          std::to_string(phi0.n_particles()));
    if (d != 1)
        throw invalid_input_error(std::string(what) + ": target positions must be 1D to match the grid");

    const double h = g.spacing;
    const int n = phi0.n_particles();
    CanonicalTarget ct;
    ct.config.points.resize(n);
    for (int j = 0; j < n; ++j) {
        const double x = target.points[j].x[0];
        const long c = std::llround((x - g.origin) / h);
        if (c < 0 || c >= g.points_per_axis)
            throw invalid_input_error(std::string(what) + ": target position " + fmt(x) +
                                      " of particle " + std::to_string(j) + " is outside the grid");
        const double t = target.points[j].t;
        const long s = std::llround(t / h);
        if (std::abs(t - static_cast<double>(s) * h) > 1e-9 * std::max(1.0, std::abs(t)))
            throw invalid_input_error(std::string(what) + ": family time " + fmt(t) +
                                      " of particle " + std::to_string(j) +
                                      " must be an integer multiple of the grid spacing " + fmt(h));
        ct.cells.push_back(c);
        ct.steps.push_back(s);
        ct.config.points[j].t = static_cast<double>(s) * h;
        ct.config.points[j].x = Eigen::VectorXd::Constant(1, g.coord(c));
    }
    if (!is_delta_spacelike(ct.config, delta))
        throw invalid_input_error(std::string(what) +
                                  ": target configuration is not delta-spacelike for range " +
                                  fmt(delta) + " after snapping to the grid");
    return ct;
}

void check_scheme(const ConstructionScheme& scheme, const PairPotential& pair, int n_particles,
                  const char* what) {
    if (!(std::isfinite(pair.range) && pair.range > 0.0))
        throw invalid_input_error(std::string(what) + ": pair range must be positive, got " +
                                  fmt(pair.range));
    if (static_cast<int>(scheme.masses.size()) != n_particles)
        throw invalid_input_error(std::string(what) + ": " + std::to_string(scheme.masses.size()) +
                                  " masses for " + std::to_string(n_particles) + " particles");
}

}  // namespace

ConstructPhiResult construct_phi(const GridFunction& phi0, const SpacetimeConfig& target,
                                 const PairPotential& pair, const ConstructionScheme& scheme) {
    const int n = phi0.n_particles();
    check_scheme(scheme, pair, n, "construct_phi");
    const CanonicalTarget ct = canonicalize_target(phi0, target, pair.range, "construct_phi");

    Partition partition =
        scheme.force_partition ? *scheme.force_partition : coarsest_partition(ct.config);
    if (scheme.force_partition) {
        if (partition.n_particles() != n)
            throw shape_error("construct_phi: forced partition is for " +
                              std::to_string(partition.n_particles()) + " particles, the state has " +
                              std::to_string(n));
        if (!in_S_delta_P(ct.config, partition, pair.range))
            throw invalid_input_error(
                "construct_phi: the forced partition does not contain the snapped target in its "
                "stratum");
    }

    // Distinct family times, visited in sweep order starting from 0.
    std::vector<long> marks = ct.steps;
    std::sort(marks.begin(), marks.end());
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
    if (scheme.order == SweepOrder::time_descending)
        std::reverse(marks.begin(), marks.end());

    const Grid& g = phi0.grid();
    const double h = g.spacing;
    GridFunction state = phi0;
    const double norm0 = phi0.norm();
    std::vector<char> frozen(n, 0);
    std::vector<FamilyStage> trace;
    long current = 0;
    for (long mark : marks) {
        if (mark != current) {
            std::vector<int> family;
            for (int j = 0; j < n; ++j)
                if (!frozen[j]) family.push_back(j);
            if (pair.profile) {
                // The generator couples pairs inside the family only. For a
                // delta-spacelike target the value read at the target cells
                // cannot depend on any dropped evolving-frozen pair term:
                // the value's dependency cone of an evolving particle stays
                // farther from every frozen particle's cell than the range.
                // Checked with the same arithmetic that zeroes the
                // interaction table, so a violation is an internal error.
                for (int i : family) {
                    const long reach = std::abs(ct.steps[i] - current);
                    for (int j = 0; j < n; ++j) {
                        if (!frozen[j]) continue;
                        const long sep = std::max(0L, std::abs(ct.cells[i] - ct.cells[j]) - reach);
                        if (std::abs(static_cast<double>(sep) * h) < pair.range)
                            throw inconsistent_input_error(
                                "construct_phi: the interaction could couple evolving particle " +
                                std::to_string(i) + " (cone radius " + std::to_string(reach) +
                                " cells around cell " + std::to_string(ct.cells[i]) +
                                ") to frozen particle " + std::to_string(j) + " at cell " +
                                std::to_string(ct.cells[j]) + " during the stage from t=" +
                                fmt(static_cast<double>(current) * h) + " to t=" +
                                fmt(static_cast<double>(mark) * h));
                    }
                }
            }
            NParticleOptions opt;
            opt.masses = scheme.masses;
            opt.pair = pair;
            state = nparticle_dirac_evolve(state, family,
                                           static_cast<double>(mark - current) * h, opt);
            const double norm_now = state.norm();
            if (norm0 > 0.0 && std::abs(norm_now - norm0) > 1e-9 * norm0)
                throw integrator_failure_error("construct_phi: norm drifted from " + fmt(norm0) +
                                               " to " + fmt(norm_now) +
                                               " during the stage ending at t=" +
                                               fmt(static_cast<double>(mark) * h));
            trace.push_back(FamilyStage{static_cast<double>(current) * h,
                                        static_cast<double>(mark) * h, family, norm_now});
            current = mark;
        }
        for (int j = 0; j < n; ++j)
            if (ct.steps[j] == mark) frozen[j] = 1;
    }

    const long base = state.index(ct.cells, std::vector<int>(n, 0));
    Eigen::VectorXcd value = state.values().segment(base, state.spin_total());

    std::vector<double> family_times;
    for (const auto& block : partition.blocks())
        family_times.push_back(static_cast<double>(ct.steps[block.front()]) * h);

    ConstructPhiResult result{
        MultiTimeSlice{std::move(partition), std::move(family_times), std::move(state),
                       std::move(trace)},
        ct.cells, std::move(value)};
    return result;
}

double overlap_welldefinedness(const GridFunction& phi0, const SpacetimeConfig& target,
                               const PairPotential& pair, const ConstructionScheme& scheme) {
    const int n = phi0.n_particles();
    check_scheme(scheme, pair, n, "overlap_welldefinedness");
    const CanonicalTarget ct =
        canonicalize_target(phi0, target, pair.range, "overlap_welldefinedness");

    const std::vector<Partition> admissible = admissible_partitions(ct.config, pair.range);
    if (admissible.size() < 2) return 0.0;

    std::vector<Eigen::VectorXcd> values;
    for (const Partition& p : admissible) {
        ConstructionScheme forced = scheme;
        forced.force_partition = p;
        values.push_back(construct_phi(phi0, target, pair, forced).value);
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < values.size(); ++a)
        for (std::size_t b = a + 1; b < values.size(); ++b)
            worst = std::max(worst, (values[a] - values[b]).cwiseAbs().maxCoeff());
    return worst;
}

}  // namespace multitime

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "multitime/lattice.hpp"

namespace multitime {

// One spacetime point per particle: a time plus a 1D or 3D position.
struct SpacetimePoint {
    double t = 0.0;
    Eigen::VectorXd x;
};

// A spacetime configuration of N particles. All positions must share
// the same spatial dimension (1 or 3). Pure geometry; the predicates
// below are functions of this data alone.
struct SpacetimeConfig {
    std::vector<SpacetimePoint> points;

    int n_particles() const { return static_cast<int>(points.size()); }
};

// Grouping of the particles {0..N-1} into disjoint non-empty blocks
// that cover the whole set (checked on construction). Stored in
// canonical form: members ascending inside each block, blocks ordered
// by their smallest member, so equal partitions compare equal.
class Partition {
  public:
    Partition(int n_particles, std::vector<std::vector<int>> blocks);

    int n_particles() const { return n_; }
    const std::vector<std::vector<int>>& blocks() const { return blocks_; }
    int n_blocks() const { return static_cast<int>(blocks_.size()); }

    // True when every block of *this lies inside one block of coarser
    // (refinement partial order, reflexive).
    bool refines(const Partition& coarser) const;

    bool operator==(const Partition& other) const {
        return n_ == other.n_ && blocks_ == other.blocks_;
    }
    bool operator!=(const Partition& other) const { return !(*this == other); }

  private:
    int n_ = 0;
    std::vector<std::vector<int>> blocks_;
};

// Every partition of {0..n-1} in a deterministic order (restricted
// growth strings, lexicographic: the one-block partition first, all
// singletons last). n is capped at 10; Bell(10) = 115975.
std::vector<Partition> all_partitions(int n_particles);

// True when every pair of particles is either strictly spacelike
// separated, (t_j-t_k)^2 - |x_j-x_k|^2 < 0, or an exact repeat of the
// same spacetime point.
bool is_spacelike(const SpacetimeConfig& q);

// True when every pair is either exactly simultaneous or separated by
// more than the time difference plus the cutoff range delta:
// |x_j-x_k| > |t_j-t_k| + delta + margin, strictly. Comparisons are
// exact floating point; configurations on the boundary are classified
// by rounding, so callers that need robustness pass a small margin to
// stay away from the boundary. delta must be positive, margin >= 0.
bool is_delta_spacelike(const SpacetimeConfig& q, double delta, double margin = 0.0);

// Membership in the partition-labelled stratum: (1) inside each block
// all times are exactly equal, and (2) across blocks every pair obeys
// the strict distance bound |x_i-x_j| > |t_i-t_j| + delta + margin.
bool in_S_delta_P(const SpacetimeConfig& q, const Partition& p, double delta,
                  double margin = 0.0);

// The equal-time grouping: blocks are the equivalence classes of exact
// time equality. This is the coarsest partition whose stratum contains
// q whenever q is delta-spacelike.
Partition coarsest_partition(const SpacetimeConfig& q);

// The finest partition whose stratum contains q: equivalence classes of
// the transitive hull of the relation |x_j-x_k| <= |t_j-t_k| + delta.
// Requires q delta-spacelike.
Partition finest_partition(const SpacetimeConfig& q, double delta);

// Every partition P whose stratum contains q. These are exactly the P
// with finest <= P <= coarsest in refinement order; the list is
// deterministic with the coarsest partition first and the finest last.
// Requires q delta-spacelike.
std::vector<Partition> admissible_partitions(const SpacetimeConfig& q, double delta);

// Order in which the inductive construction sweeps the family times.
// time_ascending evolves to the earliest family time first (the
// canonical order); time_descending evolves to the latest family time
// first and solves earlier families backward. Both orders agree on
// delta-spacelike targets up to rounding, which is what the
// order-independence tests measure.
enum class SweepOrder { time_ascending, time_descending };

// Evolution parameters for construct_phi.
struct ConstructionScheme {
    std::vector<double> masses;  // one per particle, finite, >= 0
    SweepOrder order = SweepOrder::time_ascending;
    // Overlap tests force a specific admissible partition; the default
    // is the coarsest (equal-time) partition of the target.
    std::optional<Partition> force_partition;
};

// One solved family evolution of the construction sweep.
struct FamilyStage {
    double from_time = 0.0;
    double to_time = 0.0;
    std::vector<int> evolved;  // particles advanced, ascending
    double norm_after = 0.0;   // L2 norm of the state after the stage
};

// The constructed multi-time wave function on its family structure:
// family_times[a] is the shared time of partition.blocks()[a], and
// data holds the N-particle grid function with each particle's
// coordinate at its family time. The values are meaningful at joint
// cells whose configuration (with these times) is delta-spacelike.
// The L2 norm is conserved along every stage within 1e-9 (checked).
struct MultiTimeSlice {
    Partition partition;
    std::vector<double> family_times;
    GridFunction data;
    std::vector<FamilyStage> trace;  // solved evolutions, zero-duration merges skipped
};

struct ConstructPhiResult {
    MultiTimeSlice slice;
    std::vector<long> target_cells;  // snapped cell per particle
    // Spinor at the target cells, indexed by the grid function's flat
    // spin index (the last particle's spin component is fastest).
    Eigen::VectorXcd value;
};

// Inductive construction of the consistent multi-time evolution for a
// finite-range pair interaction. phi0 is the N-particle state with all
// times zero (1D grid, two spin components per particle). The target's
// positions snap to the nearest cell centers and its times must be
// integer multiples of the grid spacing; the canonical (snapped)
// configuration must be delta-spacelike for delta = pair.range, which
// must be positive even when pair.profile is empty (free evolution).
//
// The sweep evolves the not-yet-frozen particles jointly from one
// distinct family time to the next (their free parts plus every pair
// term among them), freezing each family as its time is reached; ties
// merge into one stage and zero-duration solves are skipped. Before
// every stage, the interaction is checked to be unreachable between
// evolving and frozen particles over the cells that feed the target
// value (cell-exact dependency cones); a violation throws
// inconsistent_input_error, which cannot happen for a delta-spacelike
// target and indicates an internal error.
ConstructPhiResult construct_phi(const GridFunction& phi0, const SpacetimeConfig& target,
                                 const PairPotential& pair,
                                 const ConstructionScheme& scheme);

// Builds the value at the target once per admissible partition of the
// (canonicalized) target, forcing that partition's family structure,
// and returns the largest pairwise max-norm deviation among the
// resulting spinors. A target with fewer than two admissible
// partitions returns 0 by convention. Any forced partition in scheme
// is ignored.
double overlap_welldefinedness(const GridFunction& phi0, const SpacetimeConfig& target,
                               const PairPotential& pair, const ConstructionScheme& scheme);

}  // namespace multitime

"""Multi-time quantum evolution.

Path-ordered propagators for systems with one Hamiltonian per time
variable, flatness (consistency) diagnostics, partition geometry of
delta-spacelike configurations, and a scenario runner mirroring the
multitime_cli tool. All heavy lifting happens in the compiled _core
extension; matrices cross the boundary as numpy arrays.
"""

from ._core import (
    HamiltonianField,
    InconsistentInputError,
    IntegratorFailureError,
    InvalidInputError,
    IoError,
    TimePath,
    __version__,
    admissible_partitions,
    coarsest_partition,
    commutator,
    commuting_diagonal_field,
    consistency_residual,
    constant_field,
    finest_partition,
    is_delta_spacelike,
    matrix_exp,
    multitime_solve,
    operator_norm,
    path_independence_gap,
    path_ordered_exp,
    pauli_pair_field,
    pauli_x,
    pauli_y,
    pauli_z,
    random_staircase,
    rectangle_holonomy,
    run_scenario,
    scenario_names,
    staircase,
    stokes_gap,
)

__all__ = [
    "HamiltonianField",
    "InconsistentInputError",
    "IntegratorFailureError",
    "InvalidInputError",
    "IoError",
    "TimePath",
    "__version__",
    "admissible_partitions",
    "coarsest_partition",
    "commutator",
    "commuting_diagonal_field",
    "consistency_residual",
    "constant_field",
    "finest_partition",
    "is_delta_spacelike",
    "matrix_exp",
    "multitime_solve",
    "operator_norm",
    "path_independence_gap",
    "path_ordered_exp",
    "pauli_pair_field",
    "pauli_x",
    "pauli_y",
    "pauli_z",
    "random_staircase",
    "rectangle_holonomy",
    "run_scenario",
    "scenario_names",
    "staircase",
    "stokes_gap",
]

"""Smoke tests of the Python bindings: one probe per exposed surface."""

import numpy as np
import pytest

import multitime as mt


def test_operator_core():
    sx = mt.pauli_x()
    sz = mt.pauli_z()
    assert mt.operator_norm(sx) == pytest.approx(1.0, abs=1e-12)
    comm = mt.commutator(sx, sz)
    assert mt.operator_norm(comm) == pytest.approx(2.0, abs=1e-10)
    # exp(-i pi sigma_x) = -I
    u = mt.matrix_exp(sx, scale=-1j * np.pi)
    assert np.allclose(u, -np.eye(2), atol=1e-12)


def test_consistency_residual_flags_noncommuting_pair():
    field = mt.pauli_pair_field()
    assert field.n_times == 2
    assert field.dim == 2
    rep = mt.consistency_residual(field, np.zeros(2))
    assert rep["max_r_norm"] == pytest.approx(2.0, rel=1e-6)
    assert rep["worst"] in ((0, 1), (1, 0))
    assert rep["r_norms"].shape == (2, 2)


def test_flat_field_is_path_independent():
    field = mt.commuting_diagonal_field(2, 4, seed=3)
    start, end = np.zeros(2), np.ones(2)
    a = mt.staircase(start, end, axis_first=0, steps_per_segment=200)
    b = mt.staircase(start, end, axis_first=1, steps_per_segment=200)
    assert mt.path_independence_gap(field, a, b) <= 1e-10
    u = mt.path_ordered_exp(field, a)
    assert np.allclose(u @ u.conj().T, np.eye(4), atol=1e-12)


def test_rectangle_holonomy_ratio_approaches_commutator_norm():
    field = mt.pauli_pair_field()
    dt = 2.0**-8
    h = mt.rectangle_holonomy(field, np.zeros(2), 0, 1, dt)
    ratio = mt.operator_norm(h["loop_minus_identity"]) / dt**2
    assert ratio == pytest.approx(2.0, rel=0.05)


def test_stokes_gap_shrinks_with_mesh():
    field = mt.pauli_pair_field()
    origin, es, et = np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    g16 = mt.stokes_gap(field, origin, es, et, mesh=16)["gap"]
    g32 = mt.stokes_gap(field, origin, es, et, mesh=32)["gap"]
    assert g32 < g16


def test_partition_geometry():
    times = [0.4, 0.4]
    positions = [np.array([-0.8]), np.array([0.9])]
    assert mt.is_delta_spacelike(times, positions, delta=0.5)
    parts = mt.admissible_partitions(times, positions, delta=0.5)
    assert parts == [[[0, 1]], [[0], [1]]]
    assert mt.coarsest_partition(times, positions) == [[0, 1]]
    assert mt.finest_partition(times, positions, delta=0.5) == [[0], [1]]
    # Unequal times leave a single admissible grouping.
    parts = mt.admissible_partitions([0.2, 0.4], positions, delta=0.5)
    assert parts == [[[0], [1]]]


def test_run_scenario_roundtrip(tmp_path):
    config = {
        "scenario": "consistency-check",
        "parameters": {"field": {"kind": "pauli-pair"}, "time": [0.25, 0.75]},
    }
    out = mt.run_scenario(config, str(tmp_path / "run"))
    assert out["scenario"] == "consistency-check"
    assert out["files"] == ["consistency.json"]
    assert (tmp_path / "run" / "manifest.json").exists()
    assert (tmp_path / "run" / "consistency.json").exists()
    assert out["manifest"]["parameters"]["tolerance"] == 1e-8


def test_run_scenario_rejects_bad_config(tmp_path):
    with pytest.raises(ValueError, match='unknown scenario "nope"'):
        mt.run_scenario({"scenario": "nope"}, str(tmp_path))
    with pytest.raises(ValueError, match="parameters.time"):
        mt.run_scenario(
            {"scenario": "consistency-check", "parameters": {"field": {"kind": "pauli-pair"}}},
            str(tmp_path),
        )
    assert "delta-evolve" in mt.scenario_names()

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from oracle import I2, site_op
from schwinger_cvqe.pauli import PauliSum
from schwinger_cvqe.simulator import GateOp, QuantumState, apply_matrix, expectation, fidelity, sample_counts, variance


def dense_two_qubit(U: np.ndarray, t0: int, t1: int, n: int) -> np.ndarray:
    """Full matrix of U with targets (t0, t1), t0 the most significant gate bit."""
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        b0, b1 = (col >> t0) & 1, (col >> t1) & 1
        for r in range(4):
            row = col & ~(1 << t0) & ~(1 << t1)
            row |= ((r >> 1) & 1) << t0 | (r & 1) << t1
            out[row, col] += U[r, 2 * b0 + b1]
    return out


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(4)).map(lambda p: tuple(p[:2])), st.integers(0, 1000))
def test_apply_matrix_two_qubit(targets, seed):
    rng = np.random.default_rng(seed)
    U = unitary_group.rvs(4, random_state=rng)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    ref = dense_two_qubit(U, targets[0], targets[1], 4) @ psi
    assert np.allclose(apply_matrix(psi, U, targets, 4), ref)


def test_apply_matrix_single_qubit_and_batch():
    rng = np.random.default_rng(1)
    U = unitary_group.rvs(2, random_state=rng)
    psi = rng.normal(size=(8, 3)) + 0j
    full = site_op(3, {1: U})
    assert np.allclose(apply_matrix(psi, U, [1], 3), full @ psi)


def test_state_normalisation_and_basis():
    s = QuantumState.basis(3, 5)
    assert s.amplitudes[5] == 1
    with pytest.raises(ValueError):
        QuantumState(np.ones(4), 2)
    with pytest.raises(ValueError):
        QuantumState.basis(2, 4)


def test_expectation_variance():
    plus = QuantumState(np.array([1, 1]) / np.sqrt(2))
    X = PauliSum.from_label("X")
    Z = PauliSum.from_label("Z")
    assert expectation(plus, X) == pytest.approx(1.0)
    assert variance(plus, X) == pytest.approx(0.0, abs=1e-12)
    assert variance(plus, Z) == pytest.approx(1.0)


def test_fidelity_phase_invariant():
    rng = np.random.default_rng(3)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    v /= np.linalg.norm(v)
    assert fidelity(v, np.exp(0.7j) * v) == pytest.approx(1.0)


def test_sampling_deterministic():
    s = QuantumState(np.array([0.6, 0.8]))
    a = sample_counts(s, 10000, seed=4)
    assert a == sample_counts(s, 10000, seed=4)
    assert abs(a[1] / 10000 - 0.64) < 0.02


def test_gate_validation():
    with pytest.raises(ValueError):
        GateOp(np.eye(4), (0, 0))
    with pytest.raises(ValueError):
        GateOp(2 * I2, (0,))


def test_state_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    s = QuantumState(v / np.linalg.norm(v))
    s.save(tmp_path / "s.bin")
    assert np.array_equal(QuantumState.load(tmp_path / "s.bin").amplitudes, s.amplitudes)

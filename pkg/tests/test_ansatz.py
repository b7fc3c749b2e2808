from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from schwinger_cvqe.ansatz import (
    Circuit,
    CircuitLayout,
    DecompositionError,
    SoGateParams,
    _so8_ladder,
    build_circuit,
    decompose_so4,
    decompose_so8,
    prepare_purified,
    purified_vector,
    so_gate,
    xzx_angles,
    rx,
    rz,
)
from schwinger_cvqe.simulator import GateOp, QuantumState


def phase_distance(A: np.ndarray, B: np.ndarray) -> float:
    ov = np.vdot(A.reshape(-1), B.reshape(-1))
    return float(np.linalg.norm(A * (ov / abs(ov)) - B))


def test_xzx_angles_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c = rng.uniform(-np.pi, np.pi, 3)
        V = rx(a) @ rz(b) @ rx(c)
        a2, b2, c2 = xzx_angles(V)
        assert phase_distance(rx(a2) @ rz(b2) @ rx(c2), V) < 1e-10


def test_so4_decomposition_round_trip():
    rng = np.random.default_rng(1)
    for U in special_ortho_group.rvs(4, size=200, random_state=rng):
        gates = decompose_so4(U, targets=(1, 0))
        assert phase_distance(Circuit(2, gates).unitary(), U) < 1e-8
        assert sum(g.label == "CNOT" for g in gates) == 2


def test_so4_decomposition_rejects_non_orthogonal():
    with pytest.raises(DecompositionError):
        decompose_so4(np.diag([1, 1, 1, -1.0]))
    with pytest.raises(DecompositionError):
        decompose_so4(2 * np.eye(4))


def test_so8_decomposition_recovers_ladder_target():
    seq = _so8_ladder(4)
    rng = np.random.default_rng(3)
    U = seq.apply(np.eye(8), rng.uniform(-np.pi, np.pi, seq.n_params))
    res = decompose_so8(U, seed=0)
    assert res.below_threshold and res.distance < 1e-10 and res.n_layers <= 4
    C = Circuit(3, res.gates).unitary()
    ref = Circuit(3, [GateOp(U.astype(complex), (0, 1, 2))]).unitary()
    assert np.linalg.norm(C - ref) ** 2 < 1e-9


def test_so8_identity_and_invalid():
    assert decompose_so8(np.eye(8)).distance == 0.0
    with pytest.raises(DecompositionError):
        decompose_so8(np.eye(4))


def test_so_gate_params_validation():
    with pytest.raises(ValueError):
        SoGateParams(4, (0.0,) * 5)
    with pytest.raises(ValueError):
        SoGateParams(6, (0.0,) * 15)
    g = so_gate(SoGateParams(8, tuple(np.linspace(0, 1, 28))))
    assert g.targets == (0, 1, 2)
    assert np.allclose(g.matrix @ g.matrix.conj().T, np.eye(8))


@pytest.mark.parametrize(
    "kind,N,na,L,params",
    [("brickwall_so4", 8, 1, 7, 7 * 7 * 6), ("ladder_so4", 6, 2, 3, 3 * 5 * 6), ("ladder_so8", 16, 3, 8, 8 * 14 * 28)],
)
def test_layout_parameter_counts(kind, N, na, L, params):
    lay = CircuitLayout(kind, N, na, L)
    assert lay.n_params == params
    assert lay.n_qubits == N + na
    assert lay.symmetric(True).n_params == L * lay.params_per_gate


def test_layout_validation():
    with pytest.raises(ValueError):
        CircuitLayout("hexagonal", 4, 1, 2)
    with pytest.raises(ValueError):
        CircuitLayout("brickwall_so4", 2, 3, 1)


def test_symmetric_expansion_is_equivalent():
    lay = CircuitLayout("brickwall_so4", 6, 1, 3, True)
    shared = np.random.default_rng(4).normal(size=lay.n_params)
    full = lay.expand_params(shared)
    a = lay.gate_sequence().apply(purified_vector(6, 1)[:, None], shared)
    b = lay.symmetric(False).gate_sequence().apply(purified_vector(6, 1)[:, None], full)
    assert np.allclose(a, b)


@pytest.mark.parametrize("N,na", [(4, 1), (4, 2), (6, 3)])
def test_purified_state(N, na):
    s = prepare_purified(N, na)
    assert np.allclose(s.amplitudes, purified_vector(N, na))
    K = 1 << na
    # reduced state on the ancillas is maximally mixed
    M = s.amplitudes.reshape(1 << na, 1 << N)
    assert np.allclose(M @ M.conj().T, np.eye(K) / K)


def test_circuit_dagger_json_and_decomposition():
    lay = CircuitLayout("brickwall_so4", 4, 1, 2)
    p = np.random.default_rng(5).normal(size=lay.n_params)
    C = build_circuit(lay, p)
    U = C.unitary()
    assert np.allclose((C + C.dagger()).unitary(), np.eye(32))
    assert np.allclose(Circuit.from_json(C.to_json()).unitary(), U)
    D = C.decomposed()
    assert D.count("CNOT") == 2 * len(C)
    assert phase_distance(D.unitary(), U) < 1e-8
    assert np.allclose(Circuit.from_json(D.to_json()).unitary(), D.unitary())


def test_build_circuit_size_check():
    with pytest.raises(ValueError):
        build_circuit(CircuitLayout("brickwall_so4", 4, 1, 2), np.zeros(3))


def test_circuit_matches_engine():
    lay = CircuitLayout("ladder_so8", 6, 1, 2)
    p = np.random.default_rng(6).normal(size=lay.n_params)
    psi = build_circuit(lay, p).run(QuantumState(purified_vector(6, 1)))
    ref = lay.gate_sequence().apply(purified_vector(6, 1)[:, None], p)[:, 0]
    assert np.allclose(psi.amplitudes, ref)

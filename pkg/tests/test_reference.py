from __future__ import annotations

import numpy as np
import pytest

import oracle
from schwinger_cvqe.model import LatticeParams, build_hamiltonian
from schwinger_cvqe.reference import ReferenceError, deflated_excited_states, exact_spectrum, sector_basis
from schwinger_cvqe.simulator import fidelity


@pytest.mark.parametrize("N,x,m,l", [(4, 0.16, 0.333, 0.5), (6, 1.0, -0.1, 0.0), (8, 0.64, 0.125, 0.125)])
def test_exact_spectrum_matches_dense_oracle(N, x, m, l):
    k = 4
    w_ref, v_ref = oracle.sector_eigh(oracle.hamiltonian(N, x, m, l, 0.0), N, k)
    spec = exact_spectrum(build_hamiltonian(LatticeParams(N, x, m, l)), k)
    assert np.allclose(spec.energies, w_ref, atol=1e-10)
    for j in range(k):
        assert fidelity(spec.states[:, j], v_ref[:, j]) == pytest.approx(1.0, abs=1e-8)


def test_sparse_path_matches_dense_path(monkeypatch):
    import schwinger_cvqe.reference as ref

    H = build_hamiltonian(LatticeParams(10, 0.5, 0.1, 0.0))
    dense = exact_spectrum(H, 3)
    monkeypatch.setattr(ref, "DENSE_LIMIT", 10)
    sparse = exact_spectrum(H, 3)
    assert np.allclose(dense.energies, sparse.energies, atol=1e-9)


def test_sector_basis():
    b = sector_basis(4, 0)
    assert len(b) == 6 and all(bin(i).count("1") == 2 for i in b)
    assert len(sector_basis(4, None)) == 16
    assert list(sector_basis(4, 4)) == [0]


def test_deflation_matches_exact():
    H = build_hamiltonian(LatticeParams(6, 0.64, 0.125, 0.0))
    a = exact_spectrum(H, 4)
    b = deflated_excited_states(H, 4)
    assert np.allclose(a.energies, b.energies, atol=1e-9)


@pytest.mark.parametrize("k", [0, 100])
def test_invalid_k(k):
    H = build_hamiltonian(LatticeParams(4, 1.0, 0.0))
    with pytest.raises(ValueError):
        exact_spectrum(H, k)
    with pytest.raises(ValueError):
        deflated_excited_states(H, k)


def test_empty_sector():
    with pytest.raises(ValueError):
        exact_spectrum(build_hamiltonian(LatticeParams(4, 1.0, 0.0)), 1, charge_sector=1)


def test_reference_error_is_runtime_error():
    assert issubclass(ReferenceError, RuntimeError)

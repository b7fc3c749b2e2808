"""Exact-diagonalization oracles: charge-sector spectrum and deflation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .pauli import PauliSum, _popcount_array

DENSE_LIMIT = 1200


class ReferenceError(RuntimeError):
    pass


@dataclass
class SpectrumResult:
    energies: np.ndarray
    states: np.ndarray  # full-register vectors as columns, shape (2**n, k)
    sector: int | None
    n_qubits: int

    def state(self, i: int) -> np.ndarray:
        return self.states[:, i]

    def __len__(self) -> int:
        return self.energies.size


def sector_basis(n_qubits: int, charge_sector: int | None = 0) -> np.ndarray:
    """Basis indices with sum(Z) == charge_sector (all indices when None)."""
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    if charge_sector is None:
        return idx
    # sum Z = n - 2 * popcount
    return idx[n_qubits - 2 * _popcount_array(idx) == charge_sector]


def _embed(n_qubits: int, basis: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    full = np.zeros((1 << n_qubits, vecs.shape[1]), dtype=vecs.dtype)
    full[basis] = vecs
    return full


def _fix_sign(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of every column real positive."""
    out = vecs.copy()
    for j in range(vecs.shape[1]):
        i = np.argmax(np.abs(vecs[:, j]))
        out[:, j] *= np.exp(-1j * np.angle(vecs[i, j])) if np.iscomplexobj(vecs) else np.sign(vecs[i, j])
    return out


def _lowest(mat, k: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if dim <= DENSE_LIMIT:
        dense = mat.toarray() if hasattr(mat, "toarray") else mat
        w, v = scipy.linalg.eigh(dense, subset_by_index=[0, k - 1])
        return w, v
    w, v = spla.eigsh(mat, k=k, which="SA", tol=1e-13, ncv=max(2 * k + 20, 40))
    order = np.argsort(w)
    return w[order], v[:, order]


def exact_spectrum(hamiltonian: PauliSum, k: int, charge_sector: int | None = 0) -> SpectrumResult:
    """Lowest ``k`` eigenpairs inside a fixed sum(Z) sector."""
    n = hamiltonian.n_qubits
    if n > 20:
        raise ValueError("exact_spectrum supports at most 20 qubits")
    basis = sector_basis(n, charge_sector)
    if basis.size == 0:
        raise ValueError(f"charge sector {charge_sector} is empty for {n} qubits")
    if not 1 <= k <= basis.size:
        raise ValueError(f"k must be in [1, {basis.size}], got {k}")
    mat = hamiltonian.to_sparse(basis)
    w, v = _lowest(mat, k, basis.size)
    states = _embed(n, basis, _fix_sign(v))
    return SpectrumResult(np.asarray(w, dtype=float), states, charge_sector, n)


def spectral_range(mat, dim: int) -> tuple[float, float]:
    """Coarse (min, max) eigenvalue estimate."""
    if dim <= DENSE_LIMIT:
        w = scipy.linalg.eigvalsh(mat.toarray() if hasattr(mat, "toarray") else mat)
        return float(w[0]), float(w[-1])
    lo = spla.eigsh(mat, k=1, which="SA", tol=1e-4, return_eigenvectors=False)[0]
    hi = spla.eigsh(mat, k=1, which="LA", tol=1e-4, return_eigenvectors=False)[0]
    return float(lo), float(hi)


def deflated_excited_states(
    hamiltonian: PauliSum,
    k: int,
    omega_margin: float = 1.0,
    charge_sector: int | None = 0,
    tol: float = 1e-12,
) -> SpectrumResult:
    """Excited states as successive ground states of W + sum_j omega |j><j|.

    ``omega = (E_max - E_min) + omega_margin`` from a range estimate, which
    exceeds every gap and so pushes each found state above the rest.
    """
    n = hamiltonian.n_qubits
    basis = sector_basis(n, charge_sector)
    if not 1 <= k <= basis.size:
        raise ValueError(f"k must be in [1, {basis.size}], got {k}")
    mat = hamiltonian.to_sparse(basis)
    dim = basis.size
    lo, hi = spectral_range(mat, dim)
    omega = (hi - lo) + omega_margin
    found: list[np.ndarray] = []
    energies = []
    for _ in range(k):
        P = np.array(found).T if found else np.zeros((dim, 0))

        def matvec(v, P=P):
            v = np.asarray(v).reshape(-1)
            out = mat @ v
            if P.shape[1]:
                out = out + omega * (P @ (P.conj().T @ v))
            return out

        if dim <= DENSE_LIMIT:
            dense = mat.toarray() + omega * (P @ P.conj().T)
            w, v = scipy.linalg.eigh(dense, subset_by_index=[0, 0])
            vec = v[:, 0]
        else:
            op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=mat.dtype)
            w, v = spla.eigsh(op, k=1, which="SA", tol=tol, ncv=40)
            vec = v[:, 0]
        vec = vec / np.linalg.norm(vec)
        resid = np.linalg.norm(matvec(vec) - w[0] * vec)
        if not np.isfinite(resid) or resid > 1e-6:
            raise ReferenceError(f"deflation step {len(found)} did not converge (residual {resid:.3g})")
        found.append(vec)
        energies.append(float(np.real(np.vdot(vec, mat @ vec))))
    vecs = _fix_sign(np.array(found).T)
    return SpectrumResult(np.array(energies), _embed(n, basis, vecs), charge_sector, n)

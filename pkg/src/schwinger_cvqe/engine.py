"""Fast evaluation and adjoint differentiation of parametric SO(d) gate sequences.

Every parametric gate is ``exp(A - A^T)`` with ``A`` strictly upper triangular.
The exponential and its Frechet-derivative adjoint are computed for all gates
at once from the eigendecomposition of the Hermitian matrix ``i (A - A^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


def n_generators(dim: int) -> int:
    return dim * (dim - 1) // 2


def _skew(entries: np.ndarray, dim: int) -> np.ndarray:
    """Batched ``A - A^T`` from strict-upper-triangle entries (row-major)."""
    entries = np.asarray(entries, dtype=float)
    iu = np.triu_indices(dim, 1)
    X = np.zeros(entries.shape[:-1] + (dim, dim))
    X[..., iu[0], iu[1]] = entries
    return X - np.swapaxes(X, -1, -2)


def _eig(X: np.ndarray):
    lam, V = np.linalg.eigh(1j * X)
    # X = V diag(-i lam) V^dagger
    return lam, V


def so_matrices(entries: np.ndarray, dim: int) -> np.ndarray:
    """Batched ``exp(A - A^T)``; ``entries`` has shape ``(..., dim(dim-1)/2)``."""
    lam, V = _eig(_skew(entries, dim))
    U = (V * np.exp(-1j * lam)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)
    return U.real


def so_matrices_with_pullback(entries: np.ndarray, dim: int):
    """Return ``(U, pullback)`` where ``pullback(G)`` maps dC/dU to dC/d(entries)."""
    lam, V = _eig(_skew(entries, dim))
    phases = np.exp(-1j * lam)
    Vh = np.swapaxes(V.conj(), -1, -2)
    U = ((V * phases[..., None, :]) @ Vh).real
    # divided differences of exp at d_j = -i lam_j
    half_diff = (lam[..., :, None] - lam[..., None, :]) / 2
    phi = np.exp(-1j * (lam[..., :, None] + lam[..., None, :]) / 2) * np.sinc(half_diff / np.pi)
    iu = np.triu_indices(dim, 1)

    def pullback(G: np.ndarray) -> np.ndarray:
        Gt = Vh @ G @ V
        Gbar = (V @ (Gt * phi.conj()) @ Vh).real
        return Gbar[..., iu[0], iu[1]] - Gbar[..., iu[1], iu[0]]

    return U, pullback


def gate_indices(n_qubits: int, targets: Sequence[int]) -> np.ndarray:
    """Index array ``I`` of shape ``(2**k, 2**(n-k))`` with ``psi[I]`` the gate-local view.

    Row ``j`` is the gate-local basis index (``targets[0]`` most significant).
    """
    k = len(targets)
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    mask = 0
    for q in targets:
        mask |= 1 << q
    base = idx[(idx & mask) == 0]
    offsets = np.zeros(1 << k, dtype=np.int64)
    for j in range(1 << k):
        for i, q in enumerate(targets):
            if (j >> (k - 1 - i)) & 1:
                offsets[j] |= 1 << q
    return offsets[:, None] + base[None, :]


@dataclass
class GateSequence:
    """Parametric SO(d) gates on fixed targets with a parameter-sharing map.

    ``param_index[g]`` lists the flat-parameter positions feeding gate ``g``.
    """

    n_qubits: int
    dim: int
    targets: list[tuple[int, ...]]
    param_index: np.ndarray

    def __post_init__(self) -> None:
        # contiguous ascending targets act on a reshape view; others gather
        self._plans = []
        k = len(self.targets[0]) if self.targets else 0
        rev = np.array([int(format(j, f"0{k}b")[::-1], 2) for j in range(1 << k)]) if k else None
        cache: dict[tuple[int, ...], np.ndarray] = {}
        for t in self.targets:
            if list(t) == list(range(t[0], t[0] + len(t))):
                self._plans.append((1 << (self.n_qubits - t[0] - len(t)), 1 << t[0], None))
            else:
                if t not in cache:
                    cache[t] = gate_indices(self.n_qubits, t)
                self._plans.append((0, 0, cache[t]))
        self._rev = rev

    @property
    def n_params(self) -> int:
        return int(self.param_index.max()) + 1 if self.param_index.size else 0

    def unitaries(self, params: np.ndarray) -> np.ndarray:
        return so_matrices(np.asarray(params)[self.param_index], self.dim)

    def _forward(self, psi: np.ndarray, Us: np.ndarray) -> np.ndarray:
        shape = psi.shape
        flat = np.array(psi, dtype=np.result_type(psi, float)).reshape(shape[0], -1)
        B = flat.shape[1]
        d = self.dim
        Ups = Us[:, self._rev][:, :, self._rev]
        for U, Up, (A, C, I) in zip(Us, Ups, self._plans):
            if I is None:
                flat = np.matmul(Up, flat.reshape(A, d, C * B)).reshape(-1, B)
            else:
                flat[I] = (U @ flat[I].reshape(d, -1)).reshape(I.shape + (B,))
        return flat.reshape(shape)

    def apply(self, psi: np.ndarray, params: np.ndarray) -> np.ndarray:
        return self._forward(psi, self.unitaries(params))

    def value_and_grad(
        self,
        psi0: np.ndarray,
        params: np.ndarray,
        objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    ) -> tuple[float, np.ndarray]:
        """Adjoint-mode gradient of ``objective(U(params) psi0)``.

        ``objective`` returns the value and its real gradient with respect to
        the final state (for an energy ``<psi|H|psi>`` that is ``2 H psi``).
        """
        params = np.asarray(params, dtype=float)
        Us, pullback = so_matrices_with_pullback(params[self.param_index], self.dim)
        phi = self._forward(psi0, Us)
        value, lam = objective(phi)
        phi = phi.reshape(phi.shape[0], -1)
        lam = np.array(lam, dtype=np.result_type(lam, phi)).reshape(phi.shape)
        phi = phi.astype(lam.dtype, copy=False)
        B = phi.shape[1]
        d = self.dim
        rev = self._rev
        Ups = Us[:, rev][:, :, rev]
        G = np.empty((len(self.targets), d, d))
        viewed = np.zeros(len(self.targets), dtype=bool)
        # dC/dU_g = conj(lam_g) phi_{g-1}^T with phi_{g-1} = U_g^T phi_g
        for g in range(len(self.targets) - 1, -1, -1):
            U, Up = Us[g], Ups[g]
            A, C, I = self._plans[g]
            if I is None:
                viewed[g] = True
                pv = phi.reshape(A, d, C * B)
                lv = lam.reshape(A, d, C * B)
                M = np.matmul(lv.conj(), pv.transpose(0, 2, 1)).sum(axis=0)
                G[g] = (M @ Up).real
                phi = np.matmul(Up.T, pv).reshape(-1, B)
                lam = np.matmul(Up.T, lv).reshape(-1, B)
            else:
                P = phi[I].reshape(d, -1)
                L = lam[I].reshape(d, -1)
                G[g] = ((L.conj() @ P.T) @ U).real
                phi[I] = (U.T @ P).reshape(I.shape + (B,))
                lam[I] = (U.T @ L).reshape(I.shape + (B,))
        G[viewed] = G[viewed][:, rev][:, :, rev]
        grad_entries = pullback(G)
        grad = np.zeros(self.n_params)
        np.add.at(grad, self.param_index, grad_entries)
        return float(value), grad


def ladder_sequence(n_qubits: int, dim: int, positions: Sequence[tuple[int, ...]], shared_groups=None) -> GateSequence:
    """Gate sequence with independent parameters, or shared within ``shared_groups``."""
    P = n_generators(dim)
    if shared_groups is None:
        shared_groups = list(range(len(positions)))
    index = np.array([[grp * P + j for j in range(P)] for grp in shared_groups], dtype=np.int64)
    return GateSequence(n_qubits, dim, [tuple(p) for p in positions], index.reshape(len(positions), P))

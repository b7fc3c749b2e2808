"""Independent dense-matrix oracles built from explicit Kronecker products.

Qubit 0 is the least significant bit of the basis index, so the operator on
qubit ``q`` sits at position ``N - 1 - q`` of the Kronecker chain.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])
SP = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, raises sigma^z
SM = SP.T.copy()


def site_op(n_qubits: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    chain = [ops.get(q, I2) for q in reversed(range(n_qubits))]
    return reduce(np.kron, chain)


def link(N: int, l: float, n: int) -> np.ndarray:
    eye = np.eye(2**N)
    out = l * eye
    for k in range(n + 1):
        out = out + 0.5 * ((-1) ** k * eye + site_op(N, {k: Z}))
    return out


def hamiltonian(N: int, x: float, m: float, l: float, lam: float) -> np.ndarray:
    mu = 2 * m * np.sqrt(x)
    eye = np.eye(2**N)
    H = np.zeros((2**N, 2**N), dtype=complex)
    for n in range(N - 1):
        H += 0.5 * x * (site_op(N, {n: X, n + 1: X}) + site_op(N, {n: Y, n + 1: Y}))
    for n in range(N):
        H += 0.5 * mu * (eye + (-1) ** n * site_op(N, {n: Z}))
    for n in range(N - 1):
        L = link(N, l, n)
        H += L @ L
    Q = sum(site_op(N, {n: Z}) for n in range(N))
    H += lam * Q @ Q
    return H


def momentum(N: int, x: float) -> np.ndarray:
    O = np.zeros((2**N, 2**N), dtype=complex)
    for n in range(N - 2):
        O += -1j * x * (site_op(N, {n: SM, n + 1: Z, n + 2: SP}) - site_op(N, {n: SP, n + 1: Z, n + 2: SM}))
    return O


def condensate(N: int, x: float) -> np.ndarray:
    eye = np.eye(2**N)
    return np.sqrt(x) / (2 * N) * sum((-1) ** n * (eye + site_op(N, {n: Z})) for n in range(N))


def charge(N: int) -> np.ndarray:
    return sum(site_op(N, {n: Z}) for n in range(N))


def sector_eigh(H: np.ndarray, N: int, k: int):
    """Lowest ``k`` eigenpairs of ``H`` restricted to sum(Z) = 0."""
    idx = np.array([i for i in range(2**N) if bin(i).count("1") * 2 == N])
    w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
    full = np.zeros((2**N, k), dtype=complex)
    full[idx] = v[:, :k]
    return w[:k], full

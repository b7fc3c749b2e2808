"""Lattice Schwinger model in spin form (open boundaries, gauge field integrated out).

Qubit ``n`` is staggered site ``n``; ``|0>`` is spin up (``sigma^z = +1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .pauli import DenseOperator, PauliSum, PauliString

OBSERVABLE_KINDS = (
    "momentum_sq",
    "momentum",
    "spin_transform",
    "chiral_condensate",
    "link_field",
    "efd",
    "total_charge",
    "total_charge_sq",
)


class ClassificationError(ValueError):
    """Raised when <S_R> is too small for its phase to be meaningful."""


@dataclass(frozen=True)
class LatticeParams:
    n_sites: int
    x: float
    mass_lat: float
    bg_field: float = 0.0
    penalty_strength: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "mass_lat", "bg_field", "penalty_strength"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if int(self.n_sites) != self.n_sites or self.n_sites < 2 or self.n_sites % 2:
            raise ValueError(f"n_sites must be an even integer >= 2, got {self.n_sites}")
        if self.x < 0:
            raise ValueError("x must be nonnegative")
        if self.penalty_strength < 0:
            raise ValueError("penalty_strength must be nonnegative")

    @property
    def mu(self) -> float:
        return 2.0 * self.mass_lat * math.sqrt(self.x)

    def with_(self, **changes) -> "LatticeParams":
        return replace(self, **changes)


def _z(n: int, q: int, c: float = 1.0) -> PauliSum:
    return PauliSum.single(n, q, "Z", c)


def _link_sum(params: LatticeParams, n: int) -> PauliSum:
    """l + 1/2 sum_{k<=n} ((-1)^k + Z_k), valid for 0 <= n <= N-1."""
    N = params.n_sites
    const = params.bg_field + 0.5 * sum((-1) ** k for k in range(n + 1))
    op = PauliSum.identity(N, const)
    for k in range(n + 1):
        op = op + _z(N, k, 0.5)
    return op


def hopping_term(params: LatticeParams) -> PauliSum:
    N = params.n_sites
    strings = []
    for n in range(N - 1):
        # s+ s- + s- s+ = (XX + YY) / 2
        strings.append(PauliString(params.x / 2, {n: "X", n + 1: "X"}))
        strings.append(PauliString(params.x / 2, {n: "Y", n + 1: "Y"}))
    return PauliSum.from_strings(N, strings)


def mass_term(params: LatticeParams) -> PauliSum:
    N = params.n_sites
    op = PauliSum.identity(N, params.mu * N / 2)
    for n in range(N):
        op = op + _z(N, n, params.mu / 2 * (-1) ** n)
    return op


def electric_term(params: LatticeParams) -> PauliSum:
    N = params.n_sites
    op = PauliSum(N)
    for n in range(N - 1):
        L = _link_sum(params, n)
        op = op + L @ L
    return op


def total_charge(n_sites: int) -> PauliSum:
    op = PauliSum(n_sites)
    for n in range(n_sites):
        op = op + _z(n_sites, n)
    return op


def penalty_term(params: LatticeParams) -> PauliSum:
    Q = total_charge(params.n_sites)
    return (Q @ Q) * params.penalty_strength


def build_hamiltonian(params: LatticeParams) -> PauliSum:
    """W + lambda (sum Z)^2 as a canonical, real-coefficient Pauli sum.

    The mass term carries the constant ``mu N / 2``, so absolute energies
    vanish for the bare vacuum at infinite mass.
    """
    W = hopping_term(params) + mass_term(params) + electric_term(params)
    if params.penalty_strength > 0:
        W = W + penalty_term(params)
    return W.real_coefficients()


def momentum_operator(params: LatticeParams) -> PauliSum:
    """O_p = -i x sum_n (s-_n Z_{n+1} s+_{n+2} - s+_n Z_{n+1} s-_{n+2})."""
    N = params.n_sites
    # s- = (X - iY)/2, s+ = (X + iY)/2 in the |0> = up convention
    sm = {"X": 0.5, "Y": -0.5j}
    spl = {"X": 0.5, "Y": 0.5j}
    strings = []
    for n in range(N - 2):
        for a, ca in sm.items():
            for b, cb in spl.items():
                strings.append(PauliString(-1j * params.x * ca * cb, {n: a, n + 1: "Z", n + 2: b}))
        for a, ca in spl.items():
            for b, cb in sm.items():
                strings.append(PauliString(1j * params.x * ca * cb, {n: a, n + 1: "Z", n + 2: b}))
    if N < 3:
        return PauliSum(N)
    return PauliSum.from_strings(N, strings).real_coefficients()


def chiral_condensate(params: LatticeParams) -> PauliSum:
    """Sigma/g = sqrt(x)/(2N) sum_n (-1)^n (1 + Z_n)."""
    N = params.n_sites
    pref = math.sqrt(params.x) / (2 * N)
    op = PauliSum.identity(N, pref * sum((-1) ** n for n in range(N)))
    for n in range(N):
        op = op + _z(N, n, pref * (-1) ** n)
    return op


def efd_operator(params: LatticeParams, r: int) -> PauliSum:
    N = params.n_sites
    if not 1 <= r <= N // 2:
        raise ValueError(f"efd radius must be in [1, {N // 2}], got {r}")
    op = PauliSum(N)
    for k in range(r):
        op = op + _link_sum(params, N // 2 - k - 1) + _link_sum(params, N // 2 + k)
    return op / (2 * r)


def spin_transform(n_sites: int, flip: str = "all") -> DenseOperator:
    """S_R = (X on flipped sites) . T, T the cyclic shift by one site.

    ``T`` moves the content of site ``n`` to site ``n+1 mod N``.  The default
    flips every site, which keeps the zero-charge sector invariant; ``"odd"``
    flips only odd sites and leaks out of that sector.
    """
    N = n_sites
    if flip == "all":
        mask_flip = (1 << N) - 1
    elif flip == "odd":
        mask_flip = sum(1 << k for k in range(1, N, 2))
    else:
        raise ValueError(f"flip must be 'all' or 'odd', got {flip!r}")
    idx = np.arange(1 << N, dtype=np.int64)
    mask = (1 << N) - 1
    shifted = ((idx << 1) & mask) | (idx >> (N - 1))
    image = shifted ^ mask_flip
    mat = sp.csr_matrix((np.ones(idx.size), (image, idx)), shape=(1 << N, 1 << N))
    return DenseOperator(mat, N, hermitian=False, label="S_R")


def build_observable(kind: str, params: LatticeParams, index: int | None = None):
    """Observable operators; ``index`` is the link for ``link_field`` and r for ``efd``."""
    N = params.n_sites
    if kind == "momentum":
        return momentum_operator(params)
    if kind == "momentum_sq":
        Op = momentum_operator(params)
        return (Op @ Op).real_coefficients()
    if kind == "spin_transform":
        return spin_transform(N)
    if kind == "chiral_condensate":
        return chiral_condensate(params)
    if kind == "link_field":
        if index is None or not 0 <= index <= N - 2:
            raise ValueError(f"link index must be in [0, {N - 2}], got {index}")
        return _link_sum(params, index).real_coefficients()
    if kind == "efd":
        return efd_operator(params, 2 if index is None else index).real_coefficients()
    if kind == "total_charge":
        return total_charge(N)
    if kind == "total_charge_sq":
        Q = total_charge(N)
        return Q @ Q
    raise ValueError(f"unknown observable kind {kind!r}; expected one of {OBSERVABLE_KINDS}")


def phase_classify(sr_expectation: complex, floor: float = 1e-6) -> str:
    """'scalar' when |arg <S_R>| < pi/2, 'vector' otherwise."""
    if abs(sr_expectation) <= floor:
        raise ClassificationError(f"|<S_R>| = {abs(sr_expectation):.3g} below floor {floor:g}")
    return "scalar" if abs(np.angle(sr_expectation)) < math.pi / 2 else "vector"

"""Pauli-string algebra on qubit registers.

Strings are stored in symplectic form: an X-mask and a Z-mask with qubit ``q``
at bit ``q``.  A string with masks ``(x, z)`` and ``n_y = popcount(x & z)``
represents ``i**n_y * X^x Z^z`` so that ``(1, 1)`` on a qubit is exactly ``Y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

_LETTER = {(1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
_BITS = {"X": (1, 0), "Z": (0, 1), "Y": (1, 1)}


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _popcount_array(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    count = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        count += (a & np.uint64(1)).astype(np.int64)
        a = a >> np.uint64(1)
    return count


@dataclass(frozen=True)
class PauliString:
    """A coefficient times a tensor product of single-qubit Pauli factors."""

    coefficient: complex
    factors: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {}
        for q, p in self.factors.items():
            p = p.upper()
            if p == "I":
                continue
            if p not in _BITS:
                raise ValueError(f"unknown Pauli factor {p!r}")
            if q < 0:
                raise ValueError(f"negative qubit index {q}")
            clean[int(q)] = p
        object.__setattr__(self, "factors", dict(sorted(clean.items())))
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @property
    def masks(self) -> tuple[int, int]:
        x = z = 0
        for q, p in self.factors.items():
            bx, bz = _BITS[p]
            x |= bx << q
            z |= bz << q
        return x, z

    def label(self, n_qubits: int) -> str:
        return "".join(self.factors.get(q, "I") for q in range(n_qubits))


class PauliSum:
    """Weighted sum of Pauli strings on ``n_qubits`` qubits.

    Terms sharing a factor map are merged on construction, and terms whose
    coefficient vanishes (below ``1e-14``) are dropped.
    """

    _ZERO_TOL = 1e-14

    def __init__(self, n_qubits: int, terms: Mapping[tuple[int, int], complex] | None = None):
        if n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        self.n_qubits = int(n_qubits)
        limit = 1 << self.n_qubits
        merged: dict[tuple[int, int], complex] = {}
        for (x, z), c in (terms or {}).items():
            if x >= limit or z >= limit or x < 0 or z < 0:
                raise ValueError(f"term masks ({x}, {z}) exceed {n_qubits} qubits")
            merged[(x, z)] = merged.get((x, z), 0.0) + complex(c)
        self._terms = {k: v for k, v in merged.items() if abs(v) > self._ZERO_TOL}
        self._sparse_cache: dict = {}

    # -- construction -------------------------------------------------
    @classmethod
    def from_strings(cls, n_qubits: int, strings: Iterable[PauliString]) -> "PauliSum":
        terms: dict[tuple[int, int], complex] = {}
        for s in strings:
            if s.factors and max(s.factors) >= n_qubits:
                raise ValueError(f"qubit index {max(s.factors)} out of range for {n_qubits} qubits")
            key = s.masks
            terms[key] = terms.get(key, 0.0) + s.coefficient
        return cls(n_qubits, terms)

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n_qubits, {(0, 0): coeff})

    @classmethod
    def single(cls, n_qubits: int, qubit: int, pauli: str, coeff: complex = 1.0) -> "PauliSum":
        return cls.from_strings(n_qubits, [PauliString(coeff, {qubit: pauli})])

    @classmethod
    def from_label(cls, label: str, coeff: complex = 1.0) -> "PauliSum":
        """``label[q]`` is the factor on qubit ``q``."""
        return cls.from_strings(len(label), [PauliString(coeff, dict(enumerate(label)))])

    # -- views --------------------------------------------------------
    @property
    def terms(self) -> list[PauliString]:
        out = []
        for (x, z), c in self._terms.items():
            factors = {}
            for q in range(self.n_qubits):
                bits = ((x >> q) & 1, (z >> q) & 1)
                if bits != (0, 0):
                    factors[q] = _LETTER[bits]
            out.append(PauliString(c, factors))
        return out

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    @property
    def is_hermitian(self) -> bool:
        return all(abs(c.imag) <= 1e-12 * max(1.0, abs(c)) for c in self._terms.values())

    def constant(self) -> complex:
        return self._terms.get((0, 0), 0.0)

    # -- algebra ------------------------------------------------------
    def _check(self, other: "PauliSum") -> None:
        if other.n_qubits != self.n_qubits:
            raise ValueError(f"qubit count mismatch: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other):
        if not isinstance(other, PauliSum):
            other = PauliSum.identity(self.n_qubits, other)
        self._check(other)
        terms = dict(self._terms)
        for k, v in other._terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return PauliSum(self.n_qubits, terms)

    __radd__ = __add__

    def __neg__(self):
        return PauliSum(self.n_qubits, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            return self @ other
        return PauliSum(self.n_qubits, {k: v * other for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / other)

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        out: dict[tuple[int, int], complex] = {}
        for (x1, z1), c1 in self._terms.items():
            ny1 = _popcount(x1 & z1)
            for (x2, z2), c2 in other._terms.items():
                x, z = x1 ^ x2, z1 ^ z2
                # i^ny1 X^x1 Z^z1 . i^ny2 X^x2 Z^z2 = i^(ny1+ny2) (-1)^|z1&x2| X^x Z^z
                power = ny1 + _popcount(x2 & z2) - _popcount(x & z) + 2 * _popcount(z1 & x2)
                out[(x, z)] = out.get((x, z), 0.0) + c1 * c2 * (1j ** (power % 4))
        return PauliSum(self.n_qubits, out)

    def adjoint(self) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: np.conj(v) for k, v in self._terms.items()})

    def commutator(self, other: "PauliSum") -> "PauliSum":
        return self @ other - other @ self

    def simplify(self, tol: float = 1e-12) -> "PauliSum":
        return PauliSum(self.n_qubits, {k: v for k, v in self._terms.items() if abs(v) > tol})

    def tensor(self, other: "PauliSum") -> "PauliSum":
        """``self`` on the low qubits, ``other`` shifted above them."""
        n = self.n_qubits
        out = {}
        for (x1, z1), c1 in self._terms.items():
            for (x2, z2), c2 in other._terms.items():
                out[(x1 | (x2 << n), z1 | (z2 << n))] = c1 * c2
        return PauliSum(n + other.n_qubits, out)

    def real_coefficients(self) -> "PauliSum":
        if not self.is_hermitian:
            raise ValueError("operator is not Hermitian")
        return PauliSum(self.n_qubits, {k: v.real for k, v in self._terms.items()})

    # -- numerics -----------------------------------------------------
    def _arrays(self):
        keys = list(self._terms)
        xs = np.array([k[0] for k in keys], dtype=np.int64)
        zs = np.array([k[1] for k in keys], dtype=np.int64)
        cs = np.array([self._terms[k] for k in keys], dtype=complex)
        return xs, zs, cs

    def to_sparse(self, basis: np.ndarray | None = None) -> sp.csr_matrix:
        """Sparse matrix in the computational basis, optionally restricted.

        ``basis`` is a sorted array of basis indices; the restriction keeps
        only matrix elements between those states (the operator must map the
        subspace into itself for the result to be meaningful).
        """
        key = None if basis is None else (basis.size, int(basis[0]), int(basis[-1]), hash(basis.tobytes()))
        if key in self._sparse_cache:
            return self._sparse_cache[key]
        dim_full = 1 << self.n_qubits
        cols = np.arange(dim_full, dtype=np.int64) if basis is None else np.asarray(basis, dtype=np.int64)
        dim = cols.size
        rows_all, cols_all, vals_all = [], [], []
        diag = np.zeros(dim, dtype=complex)
        for (x, z), c in self._terms.items():
            ny = _popcount(x & z)
            phase = c * (1j ** (ny % 4)) * (1 - 2 * (_popcount_array(cols & z) & 1))
            if x == 0:
                diag += phase
                continue
            targets = cols ^ x
            if basis is None:
                r = targets
                keep = slice(None)
            else:
                r = np.searchsorted(cols, targets)
                r = np.clip(r, 0, dim - 1)
                keep = cols[r] == targets
                r = r[keep]
            rows_all.append(r)
            cols_all.append(np.arange(dim, dtype=np.int64)[keep])
            vals_all.append(phase[keep])
        rows_all.append(np.arange(dim))
        cols_all.append(np.arange(dim))
        vals_all.append(diag)
        mat = sp.csr_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(dim, dim),
        )
        mat.sum_duplicates()
        if self.is_hermitian and not np.any(np.abs(mat.data.imag) > 0):
            mat = mat.real.tocsr()
        self._sparse_cache[key] = mat
        return mat

    def to_matrix(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply to a vector (or the leading axis of a 2-d array) term by term."""
        psi = np.asarray(psi)
        dim = 1 << self.n_qubits
        if psi.shape[0] != dim:
            raise ValueError(f"state length {psi.shape[0]} does not match {self.n_qubits} qubits")
        idx = np.arange(dim, dtype=np.int64)
        out = np.zeros(psi.shape, dtype=np.result_type(psi.dtype, complex))
        for (x, z), c in self._terms.items():
            ny = _popcount(x & z)
            phase = c * (1j ** (ny % 4)) * (1 - 2 * (_popcount_array(idx & z) & 1))
            if psi.ndim == 2:
                phase = phase[:, None]
            out[idx ^ x] += phase * psi
        return out

    # -- serialization --------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for s in sorted(self.terms, key=lambda t: t.label(self.n_qubits)):
            c = s.coefficient
            lines.append(f"{c.real!r} {c.imag!r} {s.label(self.n_qubits)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PauliSum":
        strings, n = [], None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"malformed Pauli term line: {raw!r}")
            re, im, label = parts
            if n is None:
                n = len(label)
            elif len(label) != n:
                raise ValueError("inconsistent label lengths")
            strings.append(PauliString(complex(float(re), float(im)), dict(enumerate(label))))
        if n is None:
            raise ValueError("empty Pauli sum text")
        return cls.from_strings(n, strings)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "PauliSum":
        return cls.from_text(Path(path).read_text())

    def __repr__(self) -> str:
        return f"PauliSum(n_qubits={self.n_qubits}, n_terms={len(self)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum) or other.n_qubits != self.n_qubits:
            return NotImplemented
        diff = (self - other)._terms
        return all(abs(v) < 1e-12 for v in diff.values())

    __hash__ = None


class DenseOperator:
    """An operator given by an explicit (sparse-stored) matrix, not a Pauli sum."""

    def __init__(self, matrix, n_qubits: int, hermitian: bool = False, label: str = ""):
        self.matrix = sp.csr_matrix(matrix)
        if self.matrix.shape != (1 << n_qubits, 1 << n_qubits):
            raise ValueError("matrix shape does not match qubit count")
        self.n_qubits = n_qubits
        self.is_hermitian = hermitian
        self.label = label

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def to_matrix(self) -> np.ndarray:
        return self.matrix.toarray()

    def __repr__(self) -> str:
        return f"DenseOperator({self.label!r}, n_qubits={self.n_qubits})"

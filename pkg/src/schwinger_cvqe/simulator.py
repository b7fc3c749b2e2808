"""Dense statevector engine.

Qubit 0 is the least significant bit of the basis index.  A k-qubit gate
matrix is written in the kron order of its targets: ``targets[0]`` is the most
significant bit of the gate-local index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .pauli import DenseOperator, PauliSum, _popcount, _popcount_array


@dataclass(frozen=True)
class GateOp:
    matrix: np.ndarray
    targets: tuple[int, ...]
    label: str = ""
    params: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix)
        targets = tuple(int(t) for t in self.targets)
        k = len(targets)
        if k < 1 or m.shape != (1 << k, 1 << k):
            raise ValueError(f"matrix shape {m.shape} does not match {k} targets")
        if len(set(targets)) != k or min(targets) < 0:
            raise ValueError(f"targets must be distinct nonnegative indices, got {targets}")
        if not np.allclose(m @ m.conj().T, np.eye(1 << k), atol=1e-10):
            raise ValueError(f"gate {self.label!r} is not unitary")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", targets)

    def dagger(self) -> "GateOp":
        label = self.label[:-1] if self.label.endswith("†") else self.label + "†"
        return GateOp(self.matrix.conj().T, self.targets, label, self.params)


def apply_matrix(psi: np.ndarray, matrix: np.ndarray, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Apply ``matrix`` to ``targets`` of a state vector; trailing batch axes allowed.

    ``psi`` has shape ``(2**n_qubits, *batch)``; returns a new array.
    """
    k = len(targets)
    batch = psi.shape[1:]
    t = psi.reshape((2,) * n_qubits + batch)
    axes = [n_qubits - 1 - q for q in targets]
    g = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(g, t, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(psi.shape)


class QuantumState:
    """Dense amplitude vector over ``2**n_qubits`` basis states."""

    def __init__(self, amplitudes: np.ndarray, n_qubits: int | None = None, check_norm: bool = True):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if n_qubits is None:
            n_qubits = int(round(np.log2(amps.size)))
        if amps.size != 1 << n_qubits:
            raise ValueError(f"{amps.size} amplitudes do not fit {n_qubits} qubits")
        if check_norm and abs(np.linalg.norm(amps) - 1.0) > 1e-10:
            raise ValueError(f"state norm {np.linalg.norm(amps):.12g} is not 1")
        self.amplitudes = amps
        self.n_qubits = n_qubits

    @classmethod
    def zero(cls, n_qubits: int) -> "QuantumState":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps, n_qubits)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "QuantumState":
        if not 0 <= index < 1 << n_qubits:
            raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, n_qubits)

    def copy(self) -> "QuantumState":
        return QuantumState(self.amplitudes.copy(), self.n_qubits, check_norm=False)

    def apply(self, gate: GateOp) -> "QuantumState":
        """In-place gate application."""
        if max(gate.targets) >= self.n_qubits:
            raise ValueError(f"gate targets {gate.targets} out of range for {self.n_qubits} qubits")
        self.amplitudes = apply_matrix(self.amplitudes, gate.matrix, gate.targets, self.n_qubits)
        return self

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    # raw little-endian complex128 with an 8-byte qubit-count header
    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", self.n_qubits))
            fh.write(self.amplitudes.astype("<c16").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "QuantumState":
        data = Path(path).read_bytes()
        (n,) = struct.unpack("<Q", data[:8])
        amps = np.frombuffer(data[8:], dtype="<c16")
        if amps.size != 1 << n:
            raise ValueError(f"state file holds {amps.size} amplitudes, header says {n} qubits")
        return cls(amps.copy(), n)

    def __repr__(self) -> str:
        return f"QuantumState(n_qubits={self.n_qubits})"


def apply_gate(state: QuantumState, gate: GateOp) -> QuantumState:
    return state.copy().apply(gate)


def run_circuit(state: QuantumState, gates: Sequence[GateOp]) -> QuantumState:
    out = state.copy()
    for g in gates:
        out.apply(g)
    return out


def _vector(state) -> np.ndarray:
    return state.amplitudes if isinstance(state, QuantumState) else np.asarray(state)


def _n_qubits(state) -> int:
    if isinstance(state, QuantumState):
        return state.n_qubits
    return int(round(np.log2(np.asarray(state).size)))


def pauli_term_expectations(state, obs: PauliSum) -> tuple[list[tuple[int, int]], np.ndarray, np.ndarray]:
    """Per-term ``<P>`` values (without coefficients): returns keys, coefficients, values."""
    psi = _vector(state)
    n = _n_qubits(state)
    if n != obs.n_qubits:
        raise ValueError(f"state has {n} qubits, observable {obs.n_qubits}")
    idx = np.arange(psi.size, dtype=np.int64)
    keys, coeffs, values = [], [], []
    for (x, z), c in obs.items():
        ny = _popcount(x & z)
        sign = 1 - 2 * (_popcount_array(idx & z) & 1)
        val = (1j ** (ny % 4)) * np.vdot(psi[idx ^ x], sign * psi)
        keys.append((x, z))
        coeffs.append(c)
        values.append(val)
    return keys, np.array(coeffs, dtype=complex), np.array(values, dtype=complex)


def expectation(state, obs) -> complex | float:
    """<psi|O|psi>; real when ``obs`` is flagged Hermitian."""
    n = _n_qubits(state)
    if obs.n_qubits != n:
        raise ValueError(f"state has {n} qubits, observable {obs.n_qubits}")
    psi = _vector(state)
    if isinstance(obs, DenseOperator):
        val = np.vdot(psi, obs.apply(psi))
    else:
        _, coeffs, values = pauli_term_expectations(psi, obs)
        val = np.sum(coeffs * values)
    return float(val.real) if obs.is_hermitian else complex(val)


def variance(state, obs: PauliSum) -> float:
    """<O^2> - <O>^2 by double application."""
    if not obs.is_hermitian:
        raise ValueError("variance requires a Hermitian observable")
    psi = _vector(state)
    if obs.n_qubits != _n_qubits(state):
        raise ValueError("qubit count mismatch")
    o_psi = obs.to_sparse() @ psi
    mean = np.vdot(psi, o_psi).real
    return float(max(np.vdot(o_psi, o_psi).real - mean**2, 0.0))


def fidelity(a, b) -> float:
    va, vb = _vector(a), _vector(b)
    if va.shape != vb.shape:
        raise ValueError("state size mismatch")
    return float(min(abs(np.vdot(va, vb)) ** 2, 1.0))


def sample_counts(state, shots: int, seed=None) -> dict[int, int]:
    """Multinomial computational-basis draw; deterministic for a fixed seed."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = np.abs(_vector(state)) ** 2
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, p)
    return {int(i): int(c) for i, c in enumerate(counts) if c}

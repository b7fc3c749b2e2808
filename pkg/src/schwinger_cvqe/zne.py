"""Noisy inference runs: folding, depolarizing density-matrix simulation, shot noise, ZNE."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .ansatz import Circuit, CircuitLayout, build_circuit, elementary, purification_circuit
from .cvqe import ancilla_matrix, ancilla_paulis
from .pauli import PauliSum, _popcount, _popcount_array
from .simulator import GateOp, QuantumState, apply_matrix

MAX_DENSITY_QUBITS = 8


class DensityState:
    """Density matrix over ``2**n_qubits`` basis states (qubit 0 least significant)."""

    def __init__(self, matrix: np.ndarray, n_qubits: int | None = None, check: bool = True):
        rho = np.asarray(matrix, dtype=complex)
        if n_qubits is None:
            n_qubits = int(round(np.log2(rho.shape[0])))
        if n_qubits > MAX_DENSITY_QUBITS:
            raise ValueError(f"density matrices are limited to {MAX_DENSITY_QUBITS} qubits")
        if rho.shape != (1 << n_qubits, 1 << n_qubits):
            raise ValueError("matrix shape does not match the qubit count")
        if check:
            if abs(np.trace(rho) - 1) > 1e-10:
                raise ValueError(f"trace {np.trace(rho).real:.12g} is not 1")
            if not np.allclose(rho, rho.conj().T, atol=1e-10):
                raise ValueError("density matrix is not Hermitian")
            if np.linalg.eigvalsh(rho)[0] < -1e-8:
                raise ValueError("density matrix is not positive semidefinite")
        self.matrix = rho
        self.n_qubits = n_qubits

    @classmethod
    def from_pure(cls, state) -> "DensityState":
        psi = state.amplitudes if isinstance(state, QuantumState) else np.asarray(state, dtype=complex)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityState":
        return cls.from_pure(QuantumState.zero(n_qubits))

    def copy(self) -> "DensityState":
        return DensityState(self.matrix.copy(), self.n_qubits, check=False)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def apply_unitary(self, gate: GateOp) -> "DensityState":
        n = self.n_qubits
        A = apply_matrix(self.matrix, gate.matrix, gate.targets, n)
        self.matrix = apply_matrix(A.conj().T, gate.matrix, gate.targets, n).conj().T
        return self

    def depolarize(self, targets: Sequence[int], p: float) -> "DensityState":
        """rho -> (1-p) rho + p Tr_T(rho) x I/2^k on the target qubits."""
        if p == 0:
            return self
        n, k = self.n_qubits, len(targets)
        d = 1 << k
        t = self.matrix.reshape((2,) * (2 * n))
        axes = [n - 1 - q for q in targets] + [2 * n - 1 - q for q in targets]
        moved = np.moveaxis(t, axes, range(2 * k))
        shape = moved.shape
        blk = moved.reshape(d, d, -1)
        reduced = np.einsum("iir->r", blk)
        mixed = (np.eye(d)[:, :, None] * reduced[None, None, :] / d).reshape(shape)
        new = (1 - p) * moved + p * mixed
        self.matrix = np.moveaxis(new, range(2 * k), axes).reshape(self.matrix.shape)
        return self

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.matrix).real, 0, None)


@dataclass(frozen=True)
class NoiseModel:
    p1: float = 5e-4
    p2: float = 5e-3

    def __post_init__(self) -> None:
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must be in [0, 1), got {v}")

    def probability(self, n_targets: int) -> float:
        return self.p1 if n_targets == 1 else self.p2


def fold_circuit(circuit: Circuit, level: int) -> Circuit:
    """U (U^dagger U)^((level-1)/2) as a flat gate list."""
    if level < 1 or level % 2 == 0:
        raise ValueError(f"fold level must be an odd positive integer, got {level}")
    inv = circuit.dagger().gates
    gates = list(circuit.gates)
    for _ in range((level - 1) // 2):
        gates += inv + list(circuit.gates)
    return Circuit(circuit.n_qubits, gates)


def run_noisy(circuit: Circuit, noise: NoiseModel, initial: DensityState | None = None) -> DensityState:
    """Each gate: unitary conjugation then depolarizing noise on its targets."""
    if circuit.n_qubits > MAX_DENSITY_QUBITS:
        raise ValueError(f"density-matrix engine is limited to {MAX_DENSITY_QUBITS} qubits")
    rho = DensityState.zero(circuit.n_qubits) if initial is None else initial.copy()
    if rho.n_qubits != circuit.n_qubits:
        raise ValueError("initial state and circuit disagree on the qubit count")
    for g in circuit.gates:
        rho.apply_unitary(g)
        rho.depolarize(g.targets, noise.probability(len(g.targets)))
    return rho


def pauli_expectations_dm(rho: DensityState, obs: PauliSum) -> tuple[np.ndarray, np.ndarray]:
    """Per-term coefficients and exact expectation values Tr(rho P)."""
    n = rho.n_qubits
    idx = np.arange(1 << n, dtype=np.int64)
    coeffs, values = [], []
    for (x, z), c in obs.items():
        ny = _popcount(x & z)
        sign = 1 - 2 * (_popcount_array(idx & z) & 1)
        # P|i> = i^ny (-1)^{z.i} |i^x>, so Tr(rho P) = sum_i <i|rho P|i>
        val = (1j ** (ny % 4)) * np.sum(rho.matrix[idx, idx ^ x] * sign)
        coeffs.append(c)
        values.append(val.real)
    return np.array(coeffs, dtype=complex), np.array(values)


def sample_pauli_estimate(coeffs: np.ndarray, values: np.ndarray, shots: int | None, rng) -> tuple[float, float]:
    """Estimate sum_P c_P <P> from binomial +-1 draws per term; returns (mean, stderr)."""
    if shots is None:
        return float(np.sum(coeffs * values).real), 0.0
    if shots < 1:
        raise ValueError("shots must be >= 1")
    c = coeffs.real
    est = np.empty(values.size)
    var = np.empty(values.size)
    for i, v in enumerate(values):
        p_plus = min(max((1 + v) / 2, 0.0), 1.0)
        k = rng.binomial(shots, p_plus)
        est[i] = 2 * k / shots - 1
        var[i] = (1 - v * v) / shots
    return float(np.sum(c * est)), float(np.sqrt(np.sum(c * c * var)))


def zne_fit(levels_and_values: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line through (level, value); returns (intercept, slope)."""
    pts = np.asarray(levels_and_values, dtype=float)
    if pts.ndim != 2 or len(pts) < 2 or np.unique(pts[:, 0]).size < 2:
        raise ValueError("need at least two distinct levels")
    slope, intercept = np.polyfit(pts[:, 0], pts[:, 1], 1)
    return float(intercept), float(slope)


def zne_extrapolate(levels_and_values: Sequence[tuple[float, float]]) -> float:
    return zne_fit(levels_and_values)[0]


# --- inference runs ----------------------------------------------------------------


def eigenstate_circuit(layout: CircuitLayout, params: np.ndarray, rotation: np.ndarray, index: int, decompose: bool = True) -> Circuit:
    """Ancilla-free preparation of eigenstate ``index``: |index>, then V, then U.

    The eigenstate is sum_m V[m, index] U|m>, so V (as a gate on the low
    physical qubits) acts before the variational circuit.
    """
    N, Na = layout.n_physical, layout.n_ancilla
    phys = CircuitLayout(layout.kind, N, 0, layout.n_layers, layout.translation_symmetric)
    gates = [elementary("X", [q]) for q in range(Na) if (index >> q) & 1]
    if Na:
        V = np.asarray(rotation, dtype=complex)
        gates.append(GateOp(V, tuple(reversed(range(Na))), "V"))
    U = build_circuit(phys, params)
    if decompose:
        U = U.decomposed()
    return Circuit(N, gates + U.gates)


def purified_circuit(layout: CircuitLayout, params: np.ndarray, decompose: bool = True) -> Circuit:
    U = build_circuit(layout, params)
    if decompose:
        U = U.decomposed()
    return purification_circuit(layout.n_physical, layout.n_ancilla) + U


@dataclass
class QuantityResult:
    name: str
    state: int
    levels: list[int]
    values: list[float]
    stderrs: list[float]
    intercept: float
    slope: float
    reference: float | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "state": self.state,
            "levels": self.levels,
            "values": self.values,
            "stderrs": self.stderrs,
            "intercept": self.intercept,
            "slope": self.slope,
            "reference": self.reference,
        }


@dataclass
class InferenceResult:
    mode: str
    quantities: list[QuantityResult] = field(default_factory=list)

    def get(self, name: str, state: int) -> QuantityResult:
        for q in self.quantities:
            if q.name == name and q.state == state:
                return q
        raise KeyError((name, state))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "quantities": [q.to_dict() for q in self.quantities]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


class NoisyExpectations:
    """Exact noisy Pauli expectations per (circuit key, level), cached for resampling."""

    def __init__(self, noise: NoiseModel | None):
        self.noise = noise
        self._rho: dict = {}

    def density(self, key, circuit: Circuit, level: int) -> DensityState:
        if (key, level) not in self._rho:
            folded = fold_circuit(circuit, level)
            if self.noise is None:
                psi = folded.run(QuantumState.zero(circuit.n_qubits))
                self._rho[(key, level)] = DensityState.from_pure(psi)
            else:
                self._rho[(key, level)] = run_noisy(folded, self.noise)
        return self._rho[(key, level)]


def inference_run(
    layout: CircuitLayout,
    best_params: np.ndarray,
    rotation: np.ndarray | None,
    noise: NoiseModel | None,
    shots: int | None,
    observables: Mapping[str, PauliSum],
    levels: Sequence[int] = (1, 3, 5),
    seed=None,
    mode: str = "a",
    references: Mapping[str, Sequence[float]] | None = None,
    cache: NoisyExpectations | None = None,
) -> InferenceResult:
    """Mitigated per-eigenstate observables from folded noisy runs.

    Mode ``"a"`` prepares each eigenstate separately without ancillas.  Mode
    ``"b"`` runs the purified circuit once per level, measures O x P_a for
    every ancilla Pauli and rotates the reconstructed K x K matrices with V.
    """
    if rotation is None:
        raise ValueError("inference needs the rotation V")
    if shots is not None and shots < 1:
        raise ValueError("shots must be >= 1")
    rotation = np.asarray(rotation)
    K = rotation.shape[0]
    rng = np.random.default_rng(seed)
    cache = cache or NoisyExpectations(noise)
    levels = [int(l) for l in levels]
    result = InferenceResult(mode)
    if mode == "a":
        for j in range(K):
            circ = eigenstate_circuit(layout, best_params, rotation, j)
            for name, obs in observables.items():
                vals, errs = [], []
                for lev in levels:
                    rho = cache.density(("a", j), circ, lev)
                    c, v = pauli_expectations_dm(rho, obs)
                    m, e = sample_pauli_estimate(c, v, shots, rng)
                    vals.append(m)
                    errs.append(e)
                b, s = zne_fit(list(zip(levels, vals)))
                ref = None if references is None or name not in references else float(references[name][j])
                result.quantities.append(QuantityResult(name, j, levels, vals, errs, b, s, ref))
        return result
    if mode != "b":
        raise ValueError(f"mode must be 'a' or 'b', got {mode!r}")
    Na = layout.n_ancilla
    circ = purified_circuit(layout, best_params)
    labels = ancilla_paulis(Na)
    for name, obs in observables.items():
        per_level = []  # (K x K matrix, stderr vector) per level
        for lev in levels:
            rho = cache.density(("b",), circ, lev)
            M = np.zeros((K, K), dtype=complex)
            var = np.zeros((K, K))
            for label in labels:
                P = PauliSum.from_label(label)
                c, v = pauli_expectations_dm(rho, obs.tensor(P))
                m, e = sample_pauli_estimate(c, v, shots, rng)
                A = ancilla_matrix(label).conj()
                M += m * A
                var += (e * np.abs(A)) ** 2
            M = 0.5 * (M + M.conj().T)
            diag = np.real(np.einsum("mj,mn,nj->j", rotation.conj(), M, rotation))
            err = np.sqrt(np.einsum("mj,mn,nj->j", np.abs(rotation) ** 2, var, np.abs(rotation) ** 2))
            per_level.append((diag, err))
        for j in range(K):
            vals = [float(d[j]) for d, _ in per_level]
            errs = [float(e[j]) for _, e in per_level]
            b, s = zne_fit(list(zip(levels, vals)))
            ref = None if references is None or name not in references else float(references[name][j])
            result.quantities.append(QuantityResult(name, j, levels, vals, errs, b, s, ref))
    return result

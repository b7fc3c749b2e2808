"""Concurrent VQE: K orthogonal states from one circuit acting on a purified input.

The purified input is ``(1/sqrt K) sum_m |m>_phys |m>_anc``.  Because the
circuit touches only physical qubits, the ancilla index is carried as a batch
axis during optimization: column ``m`` of the working array is branch
``psi_m``, and the cost ``<H x I>`` equals ``(1/K) sum_m <psi_m|H|psi_m>``.
"""

from __future__ import annotations

import itertools
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .ansatz import CircuitLayout, build_circuit, prepare_purified
from .model import LatticeParams, build_hamiltonian, total_charge
from .pauli import PauliSum
from .reference import exact_spectrum
from .simulator import GateOp, QuantumState, expectation

PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0 + 0j, -1.0]),
}


class CvqeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Stage:
    iterations: int
    translation_symmetric: bool = False
    penalty_scale: float = 1.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "translation_symmetric": self.translation_symmetric,
            "penalty_scale": self.penalty_scale,
        }


@dataclass
class CvqeProblem:
    params: LatticeParams
    layout: CircuitLayout
    hamiltonian: PauliSum | None = None
    n_eigenstates: int | None = None
    seeds: int = 11
    stage_schedule: Sequence[Stage] = (Stage(2000),)
    init_scale: float = np.pi
    warm_noise: float = 1e-3
    gtol: float = 1e-6
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.layout.n_physical != self.params.n_sites:
            raise ValueError("layout and lattice disagree on the number of physical qubits")
        K = 1 << self.layout.n_ancilla
        if self.n_eigenstates is None:
            self.n_eigenstates = K
        if not 1 <= self.n_eigenstates <= K:
            raise ValueError(f"n_eigenstates must be in [1, {K}]")
        if self.hamiltonian is None:
            self.hamiltonian = build_hamiltonian(self.params)
        if self.hamiltonian.n_qubits != self.params.n_sites:
            raise ValueError("hamiltonian must act on the physical qubits only")
        self.stage_schedule = tuple(s if isinstance(s, Stage) else Stage(*s) for s in self.stage_schedule)
        if not self.stage_schedule:
            raise ValueError("stage_schedule is empty")
        for a, b in zip(self.stage_schedule, self.stage_schedule[1:]):
            if b.translation_symmetric and not a.translation_symmetric:
                raise ValueError("a translation-symmetric stage cannot follow an unconstrained one")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")

    @property
    def K(self) -> int:
        return 1 << self.layout.n_ancilla

    def stage_hamiltonian(self, penalty_scale: float) -> PauliSum:
        if penalty_scale == 1.0:
            return self.hamiltonian
        lam = self.params.penalty_strength * penalty_scale
        return build_hamiltonian(self.params.with_(penalty_strength=lam))

    def to_dict(self) -> dict:
        p = self.params
        return {
            "lattice": {
                "n_sites": p.n_sites,
                "x": p.x,
                "mass_lat": p.mass_lat,
                "bg_field": p.bg_field,
                "penalty_strength": p.penalty_strength,
            },
            "layout": self.layout.to_dict(),
            "n_eigenstates": self.n_eigenstates,
            "seeds": self.seeds,
            "stage_schedule": [s.to_dict() for s in self.stage_schedule],
            "init_scale": self.init_scale,
            "warm_noise": self.warm_noise,
            "gtol": self.gtol,
            "base_seed": self.base_seed,
        }


@dataclass
class CvqeResult:
    best_params: np.ndarray
    layout: CircuitLayout
    subspace_h: np.ndarray
    rotation: np.ndarray
    energies: np.ndarray
    eigen_states: list[QuantumState]
    diagnostics: list[dict]
    cost_trace: list[tuple[int, float]]
    seed: int
    seed_costs: list[float] = field(default_factory=list)
    final_cost: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "final_cost": self.final_cost,
            "seed_costs": self.seed_costs,
            "layout": self.layout.to_dict(),
            "energies": self.energies.tolist(),
            "subspace_h": self.subspace_h.real.tolist(),
            "rotation": self.rotation.real.tolist(),
            "diagnostics": self.diagnostics,
            "cost_trace": [[int(i), float(c)] for i, c in self.cost_trace],
            "best_params": self.best_params.tolist(),
        }


# --- cost and gradient -------------------------------------------------------------


def _check_params(layout: CircuitLayout, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float).reshape(-1)
    if params.size != layout.n_params:
        raise ValueError(f"expected {layout.n_params} parameters, got {params.size}")
    return params


def circuit_state(layout: CircuitLayout, params: np.ndarray) -> QuantumState:
    """U(params) applied to the purified input on the full register."""
    circ = build_circuit(layout, _check_params(layout, params))
    return circ.run(prepare_purified(layout.n_physical, layout.n_ancilla))


def cost(problem: CvqeProblem, params: np.ndarray, layout: CircuitLayout | None = None) -> float:
    """<Psi0|U^dagger (H x I) U|Psi0> = (1/K) sum_m <psi_m|H|psi_m>."""
    layout = layout or problem.layout
    state = circuit_state(layout, params)
    H_full = problem.hamiltonian.tensor(PauliSum.identity(layout.n_ancilla))
    return float(expectation(state, H_full))


def gradient(problem: CvqeProblem, params: np.ndarray, h: float = 1e-5, layout: CircuitLayout | None = None) -> np.ndarray:
    """Central finite differences, one coordinate at a time."""
    layout = layout or problem.layout
    params = _check_params(layout, params)
    objective = _BranchObjective(problem.hamiltonian, layout)
    g = np.empty(params.size)
    for i in range(params.size):
        e = np.zeros(params.size)
        e[i] = h
        g[i] = (objective.value(params + e) - objective.value(params - e)) / (2 * h)
    return g


class _BranchObjective:
    """Fast cost/gradient on the (2**N, K) branch array."""

    def __init__(self, hamiltonian: PauliSum, layout: CircuitLayout):
        self.layout = layout
        self.seq = layout.gate_sequence(physical_only=True)
        self.H = hamiltonian.to_sparse()
        K = 1 << layout.n_ancilla
        self.K = K
        self.psi0 = np.zeros((1 << layout.n_physical, K))
        self.psi0[np.arange(K), np.arange(K)] = 1.0

    def _objective(self, phi):
        Hphi = self.H @ phi
        return float(np.sum(phi * Hphi).real) / self.K, (2.0 / self.K) * Hphi

    def value(self, params: np.ndarray) -> float:
        phi = self.seq.apply(self.psi0, params)
        return self._objective(phi)[0]

    def value_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        return self.seq.value_and_grad(self.psi0, params, self._objective)

    def branches(self, params: np.ndarray) -> np.ndarray:
        return self.seq.apply(self.psi0, params)


def adjoint_gradient(problem: CvqeProblem, params: np.ndarray, layout: CircuitLayout | None = None) -> tuple[float, np.ndarray]:
    """Cost and exact gradient by reverse-mode differentiation."""
    layout = layout or problem.layout
    return _BranchObjective(problem.hamiltonian, layout).value_and_grad(_check_params(layout, params))


# --- subspace Hamiltonian and rotation --------------------------------------------


def ancilla_paulis(n_ancilla: int) -> list[str]:
    """Labels over ancillas (character i acts on ancilla a_i)."""
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n_ancilla)]


def ancilla_matrix(label: str) -> np.ndarray:
    """Matrix in the ancilla index m, with a_0 the least significant bit."""
    M = np.eye(1, dtype=complex)
    for ch in label:
        M = np.kron(PAULI_MATS[ch], M)
    return M


def subspace_from_expectations(values: dict[str, complex], n_ancilla: int) -> np.ndarray:
    """H_mn from the measured <H x P_a>: H = sum_P <H x P> conj(P)."""
    K = 1 << n_ancilla
    H = np.zeros((K, K), dtype=complex)
    for label in ancilla_paulis(n_ancilla):
        H += values.get(label, 0.0) * ancilla_matrix(label).conj()
    return H


def subspace_hamiltonian(state_after_circuit: QuantumState, hamiltonian: PauliSum, n_ancilla: int) -> np.ndarray:
    """K x K matrix <psi_m|H|psi_n> from the ancilla-Pauli expectations of H x P_a."""
    values = {}
    if n_ancilla == 0:
        return np.array([[expectation(state_after_circuit, hamiltonian)]], dtype=complex)
    for label in ancilla_paulis(n_ancilla):
        values[label] = expectation(state_after_circuit, hamiltonian.tensor(PauliSum.from_label(label)))
    H = subspace_from_expectations(values, n_ancilla)
    return 0.5 * (H + H.conj().T)


def branch_states(state: QuantumState, n_physical: int) -> np.ndarray:
    """Unnormalized branches sqrt(K) <m|_anc |Psi> as columns."""
    n_anc = state.n_qubits - n_physical
    K = 1 << n_anc
    return np.sqrt(K) * state.amplitudes.reshape(K, 1 << n_physical).T


def diagonalize_subspace(subspace_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, V = scipy.linalg.eigh(subspace_h)
    # deterministic column signs: largest entry positive
    for j in range(V.shape[1]):
        i = np.argmax(np.abs(V[:, j]))
        V[:, j] *= np.exp(-1j * np.angle(V[i, j])) if np.iscomplexobj(V) else np.sign(V[i, j])
    return w, V


def rotation_gate(V: np.ndarray, n_physical: int) -> GateOp:
    """Ancilla gate mapping |m> to sum_j V_mj |j>, i.e. matrix V^T."""
    n_anc = int(round(np.log2(V.shape[0])))
    targets = tuple(n_physical + i for i in reversed(range(n_anc)))
    return GateOp(np.asarray(V, dtype=complex).T, targets, "V")


def rotate_to_eigenstates(
    state_after_circuit: QuantumState, rotation: np.ndarray, n_physical: int
) -> list[QuantumState]:
    """Apply the rotation on the ancillas and project on each ancilla outcome."""
    rot = state_after_circuit.copy()
    if rot.n_qubits > n_physical:
        rot.apply(rotation_gate(rotation, n_physical))
    K = rotation.shape[0]
    blocks = rot.amplitudes.reshape(-1, 1 << n_physical)
    out = []
    for j in range(K):
        b = blocks[j]
        nrm = np.linalg.norm(b)
        if nrm < 1e-8:
            raise CvqeError(f"branch {j} has norm {nrm:.3g}; projection is degenerate")
        out.append(QuantumState(b / nrm, n_physical))
    return out


# --- optimization ------------------------------------------------------------------


@dataclass
class SeedRun:
    seed: int
    params: np.ndarray
    cost: float
    trace: list[tuple[int, float]]
    failed: bool = False
    message: str = ""


def _minimize(objective: _BranchObjective, x0: np.ndarray, maxiter: int, gtol: float, trace):
    def fun(x):
        v, g = objective.value_and_grad(x)
        if not np.isfinite(v):
            raise FloatingPointError("nonfinite cost")
        return v, g

    def callback(intermediate_result):
        trace.append((len(trace) + 1, float(intermediate_result.fun)))

    res = scipy.optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": maxiter, "maxcor": 10, "gtol": gtol, "ftol": 1e-15, "maxls": 40, "maxfun": 4 * maxiter + 100},
    )
    return res


def run_seed(problem: CvqeProblem, seed: int) -> SeedRun:
    rng = np.random.default_rng([problem.base_seed, seed])
    trace: list[tuple[int, float]] = []
    first = problem.stage_schedule[0]
    layout = problem.layout.symmetric(first.translation_symmetric)
    x = rng.uniform(-problem.init_scale, problem.init_scale, layout.n_params)
    prev_sym = first.translation_symmetric
    value = float("nan")
    try:
        for stage in problem.stage_schedule:
            if prev_sym and not stage.translation_symmetric:
                x = layout.expand_params(x)
                layout = layout.symmetric(False)
                x = x + rng.uniform(-problem.warm_noise, problem.warm_noise, x.size)
            prev_sym = stage.translation_symmetric
            objective = _BranchObjective(problem.stage_hamiltonian(stage.penalty_scale), layout)
            res = _minimize(objective, x, stage.iterations, problem.gtol, trace)
            x, value = res.x, float(res.fun)
    except FloatingPointError as exc:
        return SeedRun(seed, x, float("nan"), trace, True, str(exc))
    if not np.isfinite(value):
        return SeedRun(seed, x, value, trace, True, "nonfinite cost")
    return SeedRun(seed, x, value, trace)


def final_layout(problem: CvqeProblem) -> CircuitLayout:
    return problem.layout.symmetric(problem.stage_schedule[-1].translation_symmetric)


def optimize(problem: CvqeProblem, threads: int = 1, seeds: Sequence[int] | None = None) -> CvqeResult:
    """Run every seed through the stage schedule and analyse the lowest-cost one."""
    seeds = list(range(problem.seeds)) if seeds is None else list(seeds)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(lambda s: run_seed(problem, s), seeds))
    else:
        runs = [run_seed(problem, s) for s in seeds]
    ok = [r for r in runs if not r.failed]
    if not ok:
        raise CvqeError("all seeds failed: " + "; ".join(r.message for r in runs))
    best = min(ok, key=lambda r: r.cost)
    result = analyse(problem, best.params)
    result.cost_trace = best.trace
    result.seed = best.seed
    result.seed_costs = [float(r.cost) for r in runs]
    result.final_cost = best.cost
    return result


def analyse(problem: CvqeProblem, params: np.ndarray, layout: CircuitLayout | None = None, reference=None) -> CvqeResult:
    """Subspace matrix, rotation, eigenstates and diagnostics for given parameters."""
    layout = layout or final_layout(problem)
    params = _check_params(layout, params)
    stage_h = problem.stage_hamiltonian(problem.stage_schedule[-1].penalty_scale)
    objective = _BranchObjective(stage_h, layout)
    phi = objective.branches(params)
    Hs = objective.H
    K = problem.n_eigenstates
    sub = phi.T @ (Hs @ phi)
    sub = 0.5 * (sub + sub.T)
    energies, V = diagonalize_subspace(sub)
    states = phi @ V
    W = problem.params.with_(penalty_strength=0.0)
    W_op = build_hamiltonian(W)
    W_sparse = W_op.to_sparse()
    Q = total_charge(W.n_sites).to_sparse()
    if reference is None:
        reference = exact_spectrum(W_op, K)
    diagnostics = []
    eigen_states = []
    for j in range(K):
        v = states[:, j] / np.linalg.norm(states[:, j])
        eigen_states.append(QuantumState(v.astype(complex), W.n_sites))
        Wv = W_sparse @ v
        e_w = float(np.vdot(v, Wv).real)
        diagnostics.append(
            {
                "energy": float(energies[j]),
                "energy_w": e_w,
                "energy_ed": float(reference.energies[j]),
                "energy_error": abs(float(energies[j]) - float(reference.energies[j])),
                "fidelity": float(abs(np.vdot(reference.states[:, j], v)) ** 2),
                "variance": float(max(np.vdot(Wv, Wv).real - e_w**2, 0.0)),
                "charge": float(np.vdot(v, Q @ v).real),
            }
        )
    return CvqeResult(
        best_params=params,
        layout=layout,
        subspace_h=sub,
        rotation=V,
        energies=energies[:K],
        eigen_states=eigen_states,
        diagnostics=diagnostics,
        cost_trace=[],
        seed=-1,
        final_cost=float(np.trace(phi.T @ (Hs @ phi)).real / phi.shape[1]),
    )


def extend_layers(params: np.ndarray, layout: CircuitLayout, extra_layers: int, amplitude: float = 1e-3, seed=None):
    """Append layers initialised with small uniform noise (near-identity gates)."""
    rng = np.random.default_rng(seed)
    new = CircuitLayout(layout.kind, layout.n_physical, layout.n_ancilla, layout.n_layers + extra_layers, layout.translation_symmetric)
    extra = rng.uniform(-amplitude, amplitude, new.n_params - layout.n_params)
    return np.concatenate([_check_params(layout, params), extra]), new


# --- persistence -------------------------------------------------------------------


def save_checkpoint(path: str | Path, params: np.ndarray) -> None:
    """Raw little-endian float64 parameters."""
    Path(path).write_bytes(np.asarray(params, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype="<f8").copy()


def write_manifest(path: str | Path, problem: CvqeProblem, result: CvqeResult, extra: dict | None = None) -> None:
    data = {"problem": problem.to_dict(), "result": result.to_dict()}
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2))


def timed_optimize(problem: CvqeProblem, **kwargs) -> tuple[CvqeResult, float]:
    t0 = time.perf_counter()
    res = optimize(problem, **kwargs)
    return res, time.perf_counter() - t0

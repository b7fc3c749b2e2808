"""SO(4)/SO(8) gates, circuit layouts, gate decompositions and the purified input state."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize

from .engine import GateSequence, ladder_sequence, n_generators, so_matrices
from .simulator import GateOp, QuantumState, apply_matrix, run_circuit

LAYOUTS = ("brickwall_so4", "ladder_so4", "ladder_so8")

# elementary gates; two-qubit matrices in kron order of (targets[0], targets[1])
H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.diag([1, 1j])
SDG_GATE = np.diag([1, -1j])
X_GATE = np.array([[0, 1], [1, 0]], dtype=complex)
CNOT_GATE = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def elementary(label: str, targets: Sequence[int], params: Sequence[float] = ()) -> GateOp:
    label = label.upper()
    if label == "H":
        m = H_GATE
    elif label == "S":
        m = S_GATE
    elif label in ("SDG", "S†"):
        m, label = SDG_GATE, "SDG"
    elif label == "X":
        m = X_GATE
    elif label == "CNOT":
        m = CNOT_GATE
    elif label == "RX":
        m = rx(params[0])
    elif label == "RZ":
        m = rz(params[0])
    else:
        raise ValueError(f"unknown elementary gate {label!r}")
    return GateOp(m, tuple(targets), label, tuple(float(p) for p in params))


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class SoGateParams:
    dim: int
    entries: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.dim not in (4, 8):
            raise ValueError("dim must be 4 or 8")
        entries = tuple(float(e) for e in np.ravel(self.entries))
        if len(entries) != n_generators(self.dim):
            raise ValueError(f"SO({self.dim}) needs {n_generators(self.dim)} entries, got {len(entries)}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("SO gate entries must be finite")
        object.__setattr__(self, "entries", entries)


def so_gate(params: SoGateParams, targets: Sequence[int] | None = None) -> GateOp:
    """exp(A - A^T) as a 2- or 3-qubit gate (default targets 0..k-1)."""
    k = 2 if params.dim == 4 else 3
    if targets is None:
        targets = tuple(range(k))
    U = so_matrices(np.array(params.entries), params.dim)
    return GateOp(U.astype(complex), tuple(targets), f"SO{params.dim}", params.entries)


# --- SO(4) decomposition -----------------------------------------------------------

# M U M^dagger lies in SU(2) x SU(2) for U in SO(4); M = CNOT(q1->q0) (I x H) (S x S)
_CNOT_10 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
MAGIC = _CNOT_10 @ np.kron(np.eye(2), H_GATE) @ np.kron(S_GATE, S_GATE)


def _kron_factor(K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    R = K.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(R)
    A = (u[:, 0] * np.sqrt(s[0])).reshape(2, 2)
    B = (vh[0] * np.sqrt(s[0])).reshape(2, 2)
    dA = np.sqrt(np.linalg.det(A))
    return A / dA, B * dA


def xzx_angles(V: np.ndarray) -> tuple[float, float, float]:
    """Angles with V = RX(a) RZ(b) RX(c) up to a global phase."""
    V = V / np.sqrt(np.linalg.det(V))
    # H RX H = RZ, so H V H = RZ(a) RX(b) RZ(c)
    W = H_GATE @ V @ H_GATE
    p, q = W[0, 0], W[0, 1]
    b = 2 * np.arctan2(abs(q), abs(p))
    s = -2 * np.angle(p) if abs(p) > 1e-12 else 0.0
    d = -2 * np.angle(q) - np.pi if abs(q) > 1e-12 else 0.0
    return (s + d) / 2, b, (s - d) / 2


def decompose_so4(U: np.ndarray, targets: Sequence[int] = (0, 1)) -> list[GateOp]:
    """Two-CNOT circuit for an SO(4) matrix (equal to ``U`` up to global phase)."""
    U = np.asarray(U)
    if U.shape != (4, 4) or np.max(np.abs(U.imag if np.iscomplexobj(U) else 0)) > 1e-8:
        raise DecompositionError("expected a real 4x4 matrix")
    U = np.real(U)
    if not np.allclose(U @ U.T, np.eye(4), atol=1e-8) or abs(np.linalg.det(U) - 1) > 1e-8:
        raise DecompositionError("matrix is not in SO(4)")
    A, B = _kron_factor(MAGIC @ U @ MAGIC.conj().T)
    q0, q1 = targets
    gates = [
        elementary("S", [q0]),
        elementary("S", [q1]),
        elementary("H", [q1]),
        elementary("CNOT", [q1, q0]),
    ]
    for V, q in ((A, q0), (B, q1)):
        a, b, c = xzx_angles(V)
        # matrix product RX(a) RZ(b) RX(c) -> apply RX(c) first
        gates += [elementary("RX", [q], [c]), elementary("RZ", [q], [b]), elementary("RX", [q], [a])]
    gates += [
        elementary("CNOT", [q1, q0]),
        elementary("H", [q1]),
        elementary("SDG", [q0]),
        elementary("SDG", [q1]),
    ]
    return gates


# --- SO(8) decomposition -----------------------------------------------------------


@dataclass
class So8Decomposition:
    params: np.ndarray
    n_layers: int
    distance: float
    below_threshold: bool
    gates: list[GateOp] = field(default_factory=list)


def _so8_ladder(n_layers: int) -> GateSequence:
    positions = [(0, 1), (1, 2)] * n_layers
    return ladder_sequence(3, 4, positions)


def decompose_so8(
    U: np.ndarray,
    max_layers: int = 4,
    threshold: float = 1e-10,
    n_restarts: int = 8,
    seed: int = 0,
    targets: Sequence[int] = (0, 1, 2),
    max_iter: int = 5000,
    threads: int = 1,
) -> So8Decomposition:
    """Fit a ladder of SO(4) gates on (q0,q1),(q1,q2) to an SO(8) target.

    Minimizes the squared Frobenius distance with L-BFGS from ``n_restarts``
    random starts per layer count, from 1 up to ``max_layers``.
    """
    U = np.real_if_close(np.asarray(U))
    if U.shape != (8, 8) or not np.allclose(U @ U.T, np.eye(8), atol=1e-8) or abs(np.linalg.det(U) - 1) > 1e-8:
        raise DecompositionError("matrix is not in SO(8)")
    if max_layers < 1:
        raise ValueError("max_layers must be >= 1")
    if np.allclose(U, np.eye(8), atol=1e-14):
        params = np.zeros(12)
        return So8Decomposition(params, 1, 0.0, True, _so8_gates(params, 1, targets))
    eye = np.eye(8)

    def objective(W: np.ndarray):
        diff = W - U
        return float(np.sum(diff * diff)), 2 * diff

    best = None
    rng = np.random.default_rng(seed)
    for layers in range(1, max_layers + 1):
        seq = _so8_ladder(layers)
        starts = [rng.uniform(-np.pi, np.pi, seq.n_params) for _ in range(n_restarts)]

        def fit(x0):
            res = scipy.optimize.minimize(
                lambda p: seq.value_and_grad(eye, p, objective),
                x0,
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": max_iter, "maxcor": 10, "ftol": 0.0, "gtol": 1e-14},
            )
            return res.fun, res.x

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                fits = list(pool.map(fit, starts))
        else:
            fits = []
            for x0 in starts:
                fits.append(fit(x0))
                if fits[-1][0] < threshold:
                    break
        for fun, x in fits:
            if best is None or fun < best[0]:
                best = (fun, x, layers)
        if best[0] < threshold:
            break
    fun, x, layers = best
    return So8Decomposition(x, layers, float(fun), bool(fun < threshold), _so8_gates(x, layers, targets))


def _so8_gates(params: np.ndarray, n_layers: int, targets: Sequence[int]) -> list[GateOp]:
    seq = _so8_ladder(n_layers)
    t0, t1, t2 = targets
    qmap = {0: t2, 1: t1, 2: t0}
    out = []
    for U, tg, idx in zip(seq.unitaries(params), seq.targets, seq.param_index):
        out.append(GateOp(U.astype(complex), tuple(qmap[q] for q in tg), "SO4", tuple(params[idx])))
    return out


# --- layouts and circuits ----------------------------------------------------------


@dataclass(frozen=True)
class CircuitLayout:
    kind: str
    n_physical: int
    n_ancilla: int
    n_layers: int
    translation_symmetric: bool = False

    def __post_init__(self) -> None:
        if self.kind not in LAYOUTS:
            raise ValueError(f"unknown layout {self.kind!r}; expected one of {LAYOUTS}")
        if self.n_layers < 0 or self.n_ancilla < 0:
            raise ValueError("n_layers and n_ancilla must be nonnegative")
        if self.n_ancilla > self.n_physical:
            raise ValueError("n_ancilla cannot exceed n_physical")
        if self.n_physical < self.gate_width:
            raise ValueError(f"{self.kind} needs at least {self.gate_width} physical qubits")

    @property
    def gate_dim(self) -> int:
        return 8 if self.kind == "ladder_so8" else 4

    @property
    def gate_width(self) -> int:
        return 3 if self.kind == "ladder_so8" else 2

    @property
    def n_qubits(self) -> int:
        return self.n_physical + self.n_ancilla

    @property
    def params_per_gate(self) -> int:
        return n_generators(self.gate_dim)

    def layer_positions(self) -> list[tuple[int, ...]]:
        N = self.n_physical
        if self.kind == "brickwall_so4":
            return [(q, q + 1) for q in range(0, N - 1, 2)] + [(q, q + 1) for q in range(1, N - 1, 2)]
        if self.kind == "ladder_so4":
            return [(q, q + 1) for q in range(N - 1)]
        return [(q, q + 1, q + 2) for q in range(N - 2)]

    @property
    def gates_per_layer(self) -> int:
        return len(self.layer_positions())

    @property
    def n_params(self) -> int:
        per_layer = 1 if self.translation_symmetric else self.gates_per_layer
        return per_layer * self.n_layers * self.params_per_gate

    def symmetric(self, flag: bool) -> "CircuitLayout":
        return CircuitLayout(self.kind, self.n_physical, self.n_ancilla, self.n_layers, flag)

    def gate_sequence(self, physical_only: bool = False) -> GateSequence:
        """Parametric gates on the full register, or on the physical qubits alone."""
        per = self.layer_positions()
        positions = per * self.n_layers
        if self.translation_symmetric:
            groups = [layer for layer in range(self.n_layers) for _ in per]
        else:
            groups = list(range(len(positions)))
        n = self.n_physical if physical_only else self.n_qubits
        return ladder_sequence(n, self.gate_dim, positions, groups)

    def expand_params(self, shared: np.ndarray) -> np.ndarray:
        """Copy one-gate-per-layer parameters to every gate of the layer."""
        P, G = self.params_per_gate, self.gates_per_layer
        shared = np.asarray(shared).reshape(self.n_layers, P)
        return np.repeat(shared, G, axis=0).reshape(-1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_physical": self.n_physical,
            "n_ancilla": self.n_ancilla,
            "n_layers": self.n_layers,
            "translation_symmetric": self.translation_symmetric,
        }


@dataclass
class Circuit:
    n_qubits: int
    gates: list[GateOp] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def dagger(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.dagger() for g in reversed(self.gates)])

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(max(self.n_qubits, other.n_qubits), self.gates + other.gates)

    def run(self, state: QuantumState) -> QuantumState:
        return run_circuit(state, self.gates)

    def unitary(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        M = np.eye(dim, dtype=complex)
        for g in self.gates:
            M = apply_matrix(M, g.matrix, g.targets, self.n_qubits)
        return M

    def count(self, label: str) -> int:
        return sum(1 for g in self.gates if g.label == label)

    def decomposed(self) -> "Circuit":
        """Expand SO(4) gates into H, S, CNOT, RX, RZ (other gates pass through)."""
        out = []
        for g in self.gates:
            if g.label.startswith("SO4") and len(g.targets) == 2:
                out += decompose_so4(g.matrix.real, g.targets)
            else:
                out.append(g)
        return Circuit(self.n_qubits, out)

    def to_json(self) -> str:
        records = []
        for g in self.gates:
            rec = {"label": g.label, "targets": list(g.targets), "params": list(g.params)}
            if not g.params or g.label not in ("RX", "RZ", "SO4", "SO8", "SO4†", "SO8†"):
                m = np.asarray(g.matrix)
                rec["matrix_re"] = m.real.tolist()
                rec["matrix_im"] = m.imag.tolist()
            records.append(rec)
        return json.dumps({"n_qubits": self.n_qubits, "gates": records})

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        data = json.loads(text)
        gates = []
        for rec in data["gates"]:
            label, targets, params = rec["label"], rec["targets"], rec.get("params", [])
            if "matrix_re" in rec:
                m = np.array(rec["matrix_re"]) + 1j * np.array(rec["matrix_im"])
                gates.append(GateOp(m, tuple(targets), label, tuple(params)))
            elif label in ("RX", "RZ"):
                gates.append(elementary(label, targets, params))
            else:
                dim = 4 if label.startswith("SO4") else 8
                g = so_gate(SoGateParams(dim, params), targets)
                gates.append(g.dagger() if label.endswith("†") else g)
        return cls(data["n_qubits"], gates)

    def elementary_list(self) -> list[dict]:
        return [
            {"label": g.label, "targets": list(g.targets), "params": list(g.params)}
            for g in self.decomposed().gates
        ]


def build_circuit(layout: CircuitLayout, all_params: np.ndarray) -> Circuit:
    """Parametric layers on the physical qubits (state preparation is separate)."""
    all_params = np.asarray(all_params, dtype=float).reshape(-1)
    if all_params.size != layout.n_params:
        raise ValueError(f"{layout.kind} with {layout.n_layers} layers needs {layout.n_params} parameters, got {all_params.size}")
    seq = layout.gate_sequence()
    label = f"SO{layout.gate_dim}"
    gates = [
        GateOp(U.astype(complex), t, label, tuple(all_params[idx]))
        for U, t, idx in zip(seq.unitaries(all_params), seq.targets, seq.param_index)
    ]
    return Circuit(layout.n_qubits, gates)


def purification_circuit(n_physical: int, n_ancilla: int) -> Circuit:
    """H on ancilla a_i, then CNOT(a_i -> p_i); ancilla a_i is qubit n_physical + i."""
    gates = []
    for i in range(n_ancilla):
        gates.append(elementary("H", [n_physical + i]))
        gates.append(elementary("CNOT", [n_physical + i, i]))
    return Circuit(n_physical + n_ancilla, gates)


def prepare_purified(n_physical: int, n_ancilla: int) -> QuantumState:
    """(1/sqrt K) sum_m |m>_phys |m>_anc with p_i carrying bit i of m."""
    if n_ancilla > n_physical:
        raise ValueError("n_ancilla cannot exceed n_physical")
    return purification_circuit(n_physical, n_ancilla).run(QuantumState.zero(n_physical + n_ancilla))


def purified_vector(n_physical: int, n_ancilla: int) -> np.ndarray:
    """Real amplitude vector of the purified state (fast path, no gate application)."""
    K = 1 << n_ancilla
    psi = np.zeros(1 << (n_physical + n_ancilla))
    m = np.arange(K)
    psi[m + (m << n_physical)] = 1 / np.sqrt(K)
    return psi

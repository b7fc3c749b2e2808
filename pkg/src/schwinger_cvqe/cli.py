"""Command-line driver: ``python -m schwinger_cvqe <command> [--preset|--config] ...``.

Every run writes its data files plus ``manifest.json`` (config hash, library
versions, wall time) into the output directory.  Exit codes: 0 success,
2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np
import scipy
from scipy.stats import special_ortho_group

from . import __version__
from .ansatz import Circuit, CircuitLayout, DecompositionError, _so8_ladder, decompose_so4, decompose_so8
from .cvqe import CvqeError, CvqeProblem, Stage, optimize, save_checkpoint
from .model import ClassificationError, LatticeParams, build_hamiltonian, build_observable, phase_classify
from .reference import ReferenceError, exact_spectrum
from .renorm import BracketError, MassShiftRequest, extrapolate, gap_objective, mass_shift
from .simulator import expectation
from .zne import NoiseModel, inference_run

COMMANDS = ("ed", "cvqe", "dispersion", "massshift", "zne", "decompose")
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


NUMERIC_ERRORS = (
    CvqeError,
    BracketError,
    ReferenceError,
    DecompositionError,
    FloatingPointError,
    np.linalg.LinAlgError,
    ClassificationError,
    RuntimeError,
)


def fmt(value):
    """Round floats to 10 significant digits, recursively."""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return float(f"{v:.10g}") if math.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return fmt(value.tolist())
    if isinstance(value, dict):
        return {str(k): fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [fmt(v) for v in value]
    return value


def _g(v) -> str:
    return f"{float(v):.10g}"


# --- configuration -----------------------------------------------------------------

TABLE2_LATTICE = {"n_sites": 4, "x": 0.16, "mass_lat": 0.333, "bg_field": 0.5, "penalty_strength": 4.0}

PRESETS: dict[str, dict] = {
    "table2": {
        "command": "cvqe",
        "lattice": TABLE2_LATTICE,
        "ansatz": {"kind": "brickwall_so4", "n_ancilla": 1, "n_layers": 2},
        "optimizer": {"stages": [[500, False, 1.0]]},
        "seeds": 11,
    },
    "fig5": {
        "command": "cvqe",
        "lattice": {"n_sites": 8, "x": 0.64, "mass_lat": 0.125, "bg_field": 0.0, "penalty_strength": 8.0},
        "ansatz": {"kind": "brickwall_so4", "n_ancilla": 1, "n_layers": 7, "layer_sweep": list(range(2, 11))},
        "optimizer": {"stages": [[2000, False, 1.0]]},
        "seeds": 11,
    },
    "fig6-desk": {
        "command": "dispersion",
        "lattice": {"n_sites": 16, "x": 2.56, "mass_lat": 0.125, "bg_field": 0.0, "penalty_strength": 0.0},
        "n_states": 8,
    },
    "fig10-desk": {
        "command": "massshift",
        "lattice": {"n_sites": 12, "x": 1.0, "mass_lat": 0.0, "bg_field": 0.0, "penalty_strength": 0.0},
        "massshift": {
            "method": "gap",
            "bg_fields": [0.0, 0.08],
            "bracket": [-0.16, 0.0],
            "tolerance": 1e-8,
            "grid": [-0.16, -0.12, -0.08, -0.04, 0.0],
        },
    },
    "zne-demo": {
        "command": "zne",
        "lattice": TABLE2_LATTICE,
        "ansatz": {"kind": "brickwall_so4", "n_ancilla": 1, "n_layers": 2},
        "optimizer": {"stages": [[500, False, 1.0]]},
        "seeds": 11,
        "zne": {"p1": 5e-4, "p2": 2e-3, "shots": 100000, "levels": [1, 3, 5], "mode": "a", "repetitions": 1},
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return copy.deepcopy(PRESETS[name])


def _require(cfg: dict, key: str, kind=dict):
    if key not in cfg:
        raise ConfigError(f"missing required section {key!r}")
    if not isinstance(cfg[key], kind):
        raise ConfigError(f"section {key!r} must be a {kind.__name__}")
    return cfg[key]


def lattice_from(cfg: dict) -> LatticeParams:
    lat = _require(cfg, "lattice")
    allowed = {"n_sites", "x", "mass_lat", "bg_field", "penalty_strength"}
    unknown = set(lat) - allowed
    if unknown:
        raise ConfigError(f"unknown lattice fields {sorted(unknown)}")
    try:
        return LatticeParams(**lat)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid lattice: {exc}") from exc


def layout_from(cfg: dict, n_sites: int, n_layers: int | None = None) -> CircuitLayout:
    a = _require(cfg, "ansatz")
    try:
        return CircuitLayout(
            a.get("kind", "brickwall_so4"),
            n_sites,
            int(a.get("n_ancilla", 1)),
            int(a.get("n_layers", 1) if n_layers is None else n_layers),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ansatz: {exc}") from exc


def problem_from(cfg: dict, layout: CircuitLayout | None = None) -> CvqeProblem:
    params = lattice_from(cfg)
    layout = layout or layout_from(cfg, params.n_sites)
    opt = cfg.get("optimizer", {})
    if not isinstance(opt, dict):
        raise ConfigError("section 'optimizer' must be a dict")
    try:
        stages = [Stage(int(s[0]), bool(s[1]), float(s[2])) for s in opt.get("stages", [[2000, False, 1.0]])]
        return CvqeProblem(
            params,
            layout,
            seeds=int(cfg.get("seeds", 11)),
            stage_schedule=stages,
            init_scale=float(opt.get("init_scale", np.pi)),
            warm_noise=float(opt.get("warm_noise", 1e-3)),
            gtol=float(opt.get("gtol", 1e-6)),
            base_seed=int(cfg.get("seed", 0)),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid optimizer settings: {exc}") from exc


def load_config(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    else:
        raise ConfigError("one of --config or --preset is required")
    cfg_cmd = cfg.get("command")
    if cfg_cmd is not None and cfg_cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cfg_cmd!r}")
    cfg["command"] = args.command
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "schwinger_cvqe": __version__}


# --- commands ----------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_g(v) if isinstance(v, (float, np.floating)) else v for v in row])


def ed_observables(params: LatticeParams, k: int) -> list[dict]:
    """Energy, <O_p^2>/x^2, l_1 and Sigma/g for the lowest ``k`` zero-charge states."""
    W = build_hamiltonian(params.with_(penalty_strength=0.0))
    spec = exact_spectrum(W, k)
    p2 = build_observable("momentum_sq", params)
    link = build_observable("link_field", params, 1) if params.n_sites >= 3 else None
    sigma = build_observable("chiral_condensate", params)
    rows = []
    for i in range(k):
        v = spec.states[:, i]
        rows.append(
            {
                "index": i,
                "energy": float(spec.energies[i]),
                "momentum_sq_over_x2": float(np.real(expectation(v, p2))) / params.x**2,
                "l1": float(np.real(expectation(v, link))) if link is not None else float("nan"),
                "sigma_over_g": float(np.real(expectation(v, sigma))),
            }
        )
    return rows


def cmd_ed(cfg: dict, out: Path, threads: int) -> dict:
    params = lattice_from(cfg)
    k = int(cfg.get("n_states", 2))
    rows = ed_observables(params, k)
    keys = ["index", "energy", "momentum_sq_over_x2", "l1", "sigma_over_g"]
    _write_csv(out / "spectrum.csv", keys, [[r[key] for key in keys] for r in rows])
    return {"files": ["spectrum.csv"], "energies": [r["energy"] for r in rows]}


def _run_cvqe(cfg: dict, layout: CircuitLayout, threads: int):
    problem = problem_from(cfg, layout)
    t0 = time.perf_counter()
    result = optimize(problem, threads=threads)
    return problem, result, time.perf_counter() - t0


def cmd_cvqe(cfg: dict, out: Path, threads: int) -> dict:
    params = lattice_from(cfg)
    sweep = _require(cfg, "ansatz").get("layer_sweep")
    layers = [int(L) for L in sweep] if sweep else [None]
    runs = []
    for L in layers:
        layout = layout_from(cfg, params.n_sites, L)
        problem, result, wall = _run_cvqe(cfg, layout, threads)
        tag = "" if L is None else f"_L{layout.n_layers}"
        save_checkpoint(out / f"params{tag}.f8", result.best_params)
        runs.append({"n_layers": layout.n_layers, "wall_time": wall, "problem": problem.to_dict(), "result": result.to_dict()})
    manifest = runs[0] if len(runs) == 1 else {"runs": runs}
    (out / "cvqe_manifest.json").write_text(json.dumps(fmt(manifest), indent=2))
    return {"files": ["cvqe_manifest.json"], "fidelities": [[d["fidelity"] for d in r["result"]["diagnostics"]] for r in runs]}


def cmd_dispersion(cfg: dict, out: Path, threads: int) -> dict:
    params = lattice_from(cfg)
    k = int(cfg.get("n_states", 5))
    W = build_hamiltonian(params.with_(penalty_strength=0.0))
    spec = exact_spectrum(W, k)
    p2 = build_observable("momentum_sq", params)
    sr = build_observable("spin_transform", params)
    rows = []
    for i in range(k):
        v = spec.states[:, i]
        s = complex(expectation(v, sr))
        try:
            label = phase_classify(s)
        except ClassificationError:
            label = "undetermined"
        m2 = float(np.real(expectation(v, p2))) / params.x**2
        rows.append([i, float(spec.energies[i]), float(spec.energies[i] - spec.energies[0]), m2, math.sqrt(max(m2, 0.0)), s.real, s.imag, label])
    header = ["index", "energy", "excitation", "momentum_sq_over_x2", "momentum_over_x", "sr_real", "sr_imag", "branch"]
    _write_csv(out / "dispersion.csv", header, rows)
    return {"files": ["dispersion.csv"], "branches": [r[-1] for r in rows]}


def _massshift_objective(ms: dict) -> Callable[[float], float] | None:
    fixture = ms.get("objective")
    if fixture is None:
        return None
    if fixture != "linear":
        raise ConfigError(f"unknown objective fixture {fixture!r}; only 'linear' is available")
    offset = float(ms.get("offset", 0.05))
    slope = float(ms.get("slope", 1.0))
    return lambda m: slope * m + offset


def cmd_massshift(cfg: dict, out: Path, threads: int) -> dict:
    params = lattice_from(cfg)
    ms = cfg.get("massshift", {})
    if not isinstance(ms, dict):
        raise ConfigError("section 'massshift' must be a dict")
    method = ms.get("method", "gap")
    fields = ms.get("bg_fields", [params.bg_field])
    bracket = tuple(float(b) for b in ms.get("bracket", (-0.16, 0.0)))
    tol = float(ms.get("tolerance", 1e-8))
    fixture = _massshift_objective(ms)
    rows, summary = [], []
    for l in fields:
        try:
            request = MassShiftRequest(params.with_(bg_field=float(l)), method, int(ms.get("r", 2)), bracket, tol, objective=fixture)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res = mass_shift(request)
        for it, m, f in res.bisection.trace:
            rows.append([float(l), method, "bisection", it, m, f])
        entry = {"bg_field": float(l), "method": method, "mass_shift": res.mass_shift, "root": res.root, "interval": list(res.bisection.interval), "iterations": res.bisection.iterations}
        grid = ms.get("grid")
        if grid and fixture is None:
            pts = [(float(m), gap_objective(request.params.with_(mass_lat=float(m)))) for m in grid]
            for i, (m, f) in enumerate(pts):
                rows.append([float(l), "gap", "grid", i, m, f])
            fit = extrapolate(pts, "linear")
            entry["grid_fit"] = {"intercept": fit.intercept, "slope": float(fit.coefficients[1]), "r_squared": fit.r_squared}
        summary.append(entry)
    _write_csv(out / "massshift.csv", ["bg_field", "method", "kind", "iteration", "mass_lat", "objective"], rows)
    (out / "massshift_summary.json").write_text(json.dumps(fmt(summary), indent=2))
    return {"files": ["massshift.csv", "massshift_summary.json"], "mass_shift": [s["mass_shift"] for s in summary]}


def cmd_zne(cfg: dict, out: Path, threads: int) -> dict:
    params = lattice_from(cfg)
    z = cfg.get("zne", {})
    if not isinstance(z, dict):
        raise ConfigError("section 'zne' must be a dict")
    try:
        noise = NoiseModel(float(z.get("p1", 5e-4)), float(z.get("p2", 5e-3)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    layout = layout_from(cfg, params.n_sites)
    problem, result, _ = _run_cvqe(cfg, layout, threads)
    K = problem.K
    W = build_hamiltonian(params.with_(penalty_strength=0.0))
    observables = {
        "energy": W,
        "l1": build_observable("link_field", params, 1),
        "sigma_over_g": build_observable("chiral_condensate", params),
    }
    spec = exact_spectrum(W, K)
    references = {name: [float(np.real(expectation(spec.states[:, j], op))) for j in range(K)] for name, op in observables.items()}
    shots = z.get("shots", 100000)
    runs = []
    for rep in range(int(z.get("repetitions", 1))):
        res = inference_run(
            result.layout,
            result.best_params,
            result.rotation,
            noise,
            None if shots is None else int(shots),
            observables,
            levels=tuple(z.get("levels", (1, 3, 5))),
            seed=[int(cfg["seed"]), rep],
            mode=z.get("mode", "a"),
            references=references,
        )
        runs.append(res.to_dict())
    data = {"noise": {"p1": noise.p1, "p2": noise.p2}, "shots": shots, "cvqe_energies": result.energies, "references": references, "repetitions": runs}
    (out / "zne_results.json").write_text(json.dumps(fmt(data), indent=2))
    return {"files": ["zne_results.json"]}


def cmd_decompose(cfg: dict, out: Path, threads: int) -> dict:
    d = cfg.get("decompose", {})
    if not isinstance(d, dict):
        raise ConfigError("section 'decompose' must be a dict")
    gate = d.get("gate", "so8")
    n = int(d.get("n_samples", 3))
    rng = np.random.default_rng(int(cfg["seed"]))
    records = []
    if gate == "so8":
        seq = _so8_ladder(int(d.get("target_layers", 4)))
        for i in range(n):
            U = seq.apply(np.eye(8), rng.uniform(-np.pi, np.pi, seq.n_params))
            res = decompose_so8(U, max_layers=int(d.get("max_layers", 4)), seed=i, threads=threads)
            records.append({"sample": i, "n_layers": res.n_layers, "distance": res.distance, "below_threshold": res.below_threshold})
    elif gate == "so4":
        for i in range(n):
            U = special_ortho_group.rvs(4, random_state=rng)
            gates = decompose_so4(U, targets=(1, 0))
            V = Circuit(2, gates).unitary()
            phase = np.vdot(V.reshape(-1), U.reshape(-1))
            phase /= abs(phase)
            records.append({"sample": i, "n_gates": len(gates), "distance": float(np.linalg.norm(V * phase - U))})
    else:
        raise ConfigError(f"gate must be 'so4' or 'so8', got {gate!r}")
    (out / "decompose_results.json").write_text(json.dumps(fmt({"gate": gate, "samples": records}), indent=2))
    return {"files": ["decompose_results.json"]}


HANDLERS = {
    "ed": cmd_ed,
    "cvqe": cmd_cvqe,
    "dispersion": cmd_dispersion,
    "massshift": cmd_massshift,
    "zne": cmd_zne,
    "decompose": cmd_decompose,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schwinger_cvqe", description="Concurrent VQE for the lattice Schwinger model.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", help=f"named configuration ({', '.join(sorted(PRESETS))})")
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--threads", type=int, default=1, help="worker pool cap")
    p.add_argument("--out", default=".", help="output directory")
    return p


def _report(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
        t0 = time.perf_counter()
        info = HANDLERS[args.command](cfg, out, args.threads)
        wall = time.perf_counter() - t0
    except ConfigError as exc:
        return _report(EXIT_CONFIG, exc)
    except NUMERIC_ERRORS as exc:
        return _report(EXIT_NUMERIC, exc)
    manifest = {"command": args.command, "config": cfg, "config_hash": config_hash(cfg), "versions": versions(), "wall_time": wall, **info}
    (out / "manifest.json").write_text(json.dumps(fmt(manifest), indent=2))
    return 0


def main() -> None:
    sys.exit(run())

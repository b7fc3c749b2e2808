"""Mass-shift extraction from the energy gap or the electric field density."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import LatticeParams, build_hamiltonian, efd_operator
from .reference import exact_spectrum
from .simulator import expectation

EULER_GAMMA = 0.5772156649
FREE_BOSON_MASS = 1.0 / math.sqrt(math.pi)


class BracketError(ValueError):
    """The objective does not change sign across the bracket."""


def boson_mass_perturbative(m_over_g: float, theta: float = 0.0) -> float:
    """Schwinger-boson mass M_S/g to second order in m/g."""
    eg = math.exp(EULER_GAMMA)
    radicand = (
        1.0
        + 2 * math.sqrt(math.pi) * eg * m_over_g * math.cos(theta)
        + math.pi * eg**2 * m_over_g**2 * (-0.6599 * math.cos(2 * theta) + 1.7277)
    )
    if radicand < 0:
        raise ValueError(f"negative radicand {radicand:.6g} at m/g={m_over_g}, theta={theta}")
    return math.sqrt(radicand) / math.sqrt(math.pi)


Backend = Callable[[LatticeParams], np.ndarray]


def exact_backend(params: LatticeParams, k: int = 2) -> np.ndarray:
    """Lowest zero-charge energies of W (penalty vanishes in that sector)."""
    return exact_spectrum(build_hamiltonian(params.with_(penalty_strength=0.0)), k).energies


def _energies(params: LatticeParams, backend) -> np.ndarray:
    if backend == "exact" or backend is None:
        return exact_backend(params)
    if callable(backend):
        return np.asarray(backend(params), dtype=float)
    raise ValueError(f"unknown backend {backend!r}")


def lattice_gap(params: LatticeParams, backend="exact") -> float:
    """Delta / (2 sqrt x) with Delta = E1 - E0."""
    if params.x <= 0:
        raise ValueError("the rescaled gap needs x > 0")
    E = _energies(params, backend)
    return float((E[1] - E[0]) / (2 * math.sqrt(params.x)))


def gap_objective(params: LatticeParams, backend="exact") -> float:
    return lattice_gap(params, backend) - FREE_BOSON_MASS


def efd_objective(params: LatticeParams, r: int = 2) -> float:
    """Ground-state expectation of F_av (exact backend)."""
    W = build_hamiltonian(params.with_(penalty_strength=0.0))
    gs = exact_spectrum(W, 1).states[:, 0]
    return float(expectation(gs, efd_operator(params, r)))


@dataclass
class BisectionResult:
    root: float
    interval: tuple[float, float]
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return max((t[0] for t in self.trace), default=0)


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8, max_iter: int = 200) -> BisectionResult:
    """Bisection keeping a sign change; returns the final midpoint.

    The trace lists ``(iteration, point, f(point))`` with iteration 0 for the
    bracket ends.
    """
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    if tol <= 0:
        raise ValueError("tol must be positive")
    flo, fhi = f(lo), f(hi)
    trace = [(0, lo, flo), (0, hi, fhi)]
    if not (np.isfinite(flo) and np.isfinite(fhi)):
        raise FloatingPointError("objective is not finite at the bracket ends")
    if flo == 0:
        return BisectionResult(lo, (lo, lo), trace)
    if fhi == 0:
        return BisectionResult(hi, (hi, hi), trace)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change: f({lo})={flo:.6g}, f({hi})={fhi:.6g}")
    it = 0
    while hi - lo >= tol:
        it += 1
        if it > max_iter:
            raise RuntimeError("bisection did not reach the tolerance")
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if not np.isfinite(fm):
            raise FloatingPointError(f"objective is not finite at {mid}")
        trace.append((it, mid, fm))
        if fm == 0:
            lo = hi = mid
            break
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return BisectionResult(0.5 * (lo + hi), (lo, hi), trace)


@dataclass
class MassShiftRequest:
    params: LatticeParams
    method: str = "gap"
    r: int = 2
    bracket: tuple[float, float] = (-0.16, 0.0)
    tolerance: float = 1e-8
    backend: object = "exact"
    objective: Callable[[float], float] | None = None

    def __post_init__(self) -> None:
        if self.method not in ("gap", "efd"):
            raise ValueError(f"method must be 'gap' or 'efd', got {self.method!r}")
        if self.method == "efd" and self.backend not in ("exact", None):
            raise ValueError("the efd method is implemented for the exact backend only")

    def objective_at(self, mass_lat: float) -> float:
        if self.objective is not None:
            return float(self.objective(mass_lat))
        p = self.params.with_(mass_lat=mass_lat)
        if self.method == "gap":
            return gap_objective(p, self.backend)
        return efd_objective(p, self.r)


@dataclass
class MassShiftResult:
    mass_shift: float
    bisection: BisectionResult
    request: MassShiftRequest

    @property
    def root(self) -> float:
        return self.bisection.root


def mass_shift(request: MassShiftRequest) -> MassShiftResult:
    """m_s/g = -(m_lat/g where the objective vanishes)."""
    lo, hi = request.bracket
    res = bisect(request.objective_at, lo, hi, request.tolerance)
    return MassShiftResult(-res.root, res, request)


@dataclass
class FitResult:
    coefficients: np.ndarray  # ascending powers
    intercept: float
    residual_norm: float
    r_squared: float


def extrapolate(points: Sequence[tuple[float, float]], model: str = "linear") -> FitResult:
    """Least-squares polynomial fit; the intercept is the value at abscissa 0."""
    degree = {"linear": 1, "cubic_poly": 3, "cubic": 3}.get(model)
    if degree is None:
        raise ValueError(f"unknown model {model!r}")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < degree + 1:
        raise ValueError(f"{model} fit needs at least {degree + 1} (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    A = np.vander(x, degree + 1, increasing=True)
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < degree + 1:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(coef, float(coef[0]), float(np.linalg.norm(resid)), r2)

"""Concurrent variational eigensolver for the lattice Schwinger model."""

from __future__ import annotations

__version__ = "0.1.0"

from .model import LatticeParams, build_hamiltonian, build_observable
from .pauli import PauliSum
from .reference import deflated_excited_states, exact_spectrum
from .simulator import QuantumState

__all__ = [
    "LatticeParams",
    "PauliSum",
    "QuantumState",
    "build_hamiltonian",
    "build_observable",
    "deflated_excited_states",
    "exact_spectrum",
    "__version__",
]

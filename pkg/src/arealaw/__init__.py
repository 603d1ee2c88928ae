"""Quasi-adiabatic continuation and entanglement area laws on small spin lattices."""

from .errors import (
    ArealawError,
    ConfigError,
    DependencyError,
    DomainError,
    GapClosed,
    GeometryWarning,
    NoFeasibleR0,
    StructuralError,
)
from .lattice import Cut, Lattice, Region

__version__ = "0.1.0"

__all__ = [
    "ArealawError",
    "ConfigError",
    "Cut",
    "DependencyError",
    "DomainError",
    "GapClosed",
    "GeometryWarning",
    "Lattice",
    "NoFeasibleR0",
    "Region",
    "StructuralError",
]

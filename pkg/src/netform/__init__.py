"""Numerical laboratory for an elliptic-parabolic network-formation system.

Submodules: :mod:`grid` (discrete calculus), :mod:`elliptic` (pressure
solve and audits), :mod:`dynamics` (time stepping), :mod:`energy` (energy
ledgers), :mod:`bounds` (closed-form estimates and the life-span equation)
and :mod:`cli` (command line front end).
"""

__version__ = "0.1.0"

from .errors import ConfigError, SolverFailure  # noqa: E402
from .grid import Grid, ScalarField, VectorField  # noqa: E402
from .params import PhysParams  # noqa: E402

__all__ = ["__version__", "ConfigError", "SolverFailure", "Grid", "ScalarField", "VectorField", "PhysParams"]

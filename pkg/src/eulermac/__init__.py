"""Euler-Maclaurin integrators with exact derivatives from truncated gross arithmetic."""

__version__ = "0.1.0"

from .deriv import DerivativeStrategy, LieDerivatives, lie_derivatives
from .grossone import GrossValue, GrossVector
from .integrators import (
    EulerMaclaurin,
    Gauss,
    IntegrationError,
    IntegratorSpec,
    NewtonConfig,
    NonConvergenceError,
    TaylorExplicit,
    TaylorImplicit,
    Trajectory,
    integrate,
)
from .problems import cassini, fpu, get_problem, kepler, pendulum

__all__ = [
    "DerivativeStrategy",
    "LieDerivatives",
    "lie_derivatives",
    "GrossValue",
    "GrossVector",
    "EulerMaclaurin",
    "Gauss",
    "IntegrationError",
    "IntegratorSpec",
    "NewtonConfig",
    "NonConvergenceError",
    "TaylorExplicit",
    "TaylorImplicit",
    "Trajectory",
    "integrate",
    "cassini",
    "fpu",
    "get_problem",
    "kepler",
    "pendulum",
]

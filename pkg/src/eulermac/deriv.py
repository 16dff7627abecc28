"""Exact higher derivatives of a black-box vector field.

The derivatives ``y^(k)(t) = D_{k-1} f(y)`` are read off the grossdigits of
forward differences taken along explicit Euler micro-steps of infinitesimal
length ``G^-1``:

* strategy ``a`` differences the micro-states themselves and needs depth ``k``;
* strategy ``b`` differences the field values at the micro-states and only
  needs depth ``k - 1`` (one micro-step fewer, one grosspower fewer).

Both return the same numbers.  A third source, ``analytic``, delegates to
closed-form recurrences supplied by the system itself.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grossone import GrossValue, GrossVector

__all__ = [
    "DerivativeStrategy",
    "LieDerivatives",
    "euler_microsteps",
    "forward_difference",
    "derivatives_strategy_a",
    "derivatives_strategy_b",
    "derivatives_analytic",
    "lie_derivatives",
]


class DerivativeStrategy(str, enum.Enum):
    FORWARD_ON_STATE = "a"
    FORWARD_ON_FIELD = "b"
    ANALYTIC = "analytic"

    @classmethod
    def parse(cls, value) -> "DerivativeStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown derivative strategy {value!r}; expected one of "
                f"{[s.value for s in cls]}"
            ) from None


@dataclass(frozen=True)
class LieDerivatives:
    """Stack ``D_0 f(y), ..., D_{s-1} f(y)`` at ``base_state``.

    ``values[j]`` is the ``(j+1)``-th time derivative of the solution through
    ``base_state``.
    """

    base_state: np.ndarray
    values: tuple

    @property
    def order(self) -> int:
        return len(self.values)

    def derivative(self, k: int) -> np.ndarray:
        """Return ``y^(k)`` for ``1 <= k <= order``."""
        if not 1 <= k <= len(self.values):
            raise IndexError(f"derivative order {k} not available (have 1..{self.order})")
        return self.values[k - 1]


def _gross_time(t: float, j: int, depth: int) -> GrossValue:
    # t advances by G^-1 per micro-step (time augmentation)
    if depth == 0:
        return GrossValue(t)
    return GrossValue((t, j), depth=depth)


def _microsteps(system, t, y, count, depth):
    timed = not system.autonomous
    state = GrossVector.lift(y, depth)
    states = [state]
    fields = []
    for j in range(count):
        fj = system.gross_rhs(_gross_time(t, j, depth) if timed else t, state)
        fields.append(fj)
        state = state + fj.shift(1)
        states.append(state)
    return states, fields


def euler_microsteps(system, t: float, y, count: int, depth: int) -> list:
    """Run ``count`` explicit Euler steps of length ``G^-1`` from ``y``.

    Returns the micro-states ``y_0 = lift(y), y_1, ..., y_count`` as
    :class:`GrossVector` of the given depth.
    """
    if depth < 1:
        raise ValueError("micro-steps need depth >= 1 to carry the infinitesimal step")
    if count < 0:
        raise ValueError("count must be non-negative")
    states, _ = _microsteps(system, t, np.asarray(y, dtype=float), count, depth)
    return states


def forward_difference(values: Sequence, k: int):
    """Binomial forward difference ``sum_j (-1)^j C(k, j) values[k - j]``."""
    if k < 0:
        raise ValueError("difference order must be non-negative")
    if len(values) < k + 1:
        raise ValueError(f"order-{k} forward difference needs {k + 1} values, got {len(values)}")
    acc = values[k]
    for j in range(1, k + 1):
        w = math.comb(k, j)
        term = values[k - j] * (w if j % 2 == 0 else -w)
        acc = acc + term
    return acc


def derivatives_strategy_a(system, t: float, y, k_max: int) -> LieDerivatives:
    """Derivatives of orders ``1..k_max`` from differences of micro-states (depth ``k_max``)."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    y = np.asarray(y, dtype=float)
    states, _ = _microsteps(system, t, y, k_max, k_max)
    values = tuple(forward_difference(states, k).coeff_at(k) for k in range(1, k_max + 1))
    return LieDerivatives(y, values)


def derivatives_strategy_b(system, t: float, y, k_max: int) -> LieDerivatives:
    """Derivatives of orders ``1..k_max`` from differences of field values (depth ``k_max - 1``)."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    y = np.asarray(y, dtype=float)
    depth = k_max - 1
    if depth == 0:
        return LieDerivatives(y, (np.asarray(system.rhs(t, y), dtype=float),))
    states, fields = _microsteps(system, t, y, k_max - 1, depth)
    t_last = t if system.autonomous else _gross_time(t, k_max - 1, depth)
    fields.append(system.gross_rhs(t_last, states[-1]))
    values = tuple(
        forward_difference(fields, k - 1).coeff_at(k - 1) for k in range(1, k_max + 1)
    )
    return LieDerivatives(y, values)


def derivatives_analytic(system, t: float, y, k_max: int) -> LieDerivatives:
    if getattr(system, "lie", None) is None:
        raise ValueError(f"system {system.name!r} does not supply closed-form Lie derivatives")
    y = np.asarray(y, dtype=float)
    return LieDerivatives(y, tuple(system.lie_derivatives(t, y, k_max)))


_DISPATCH = {
    DerivativeStrategy.FORWARD_ON_STATE: derivatives_strategy_a,
    DerivativeStrategy.FORWARD_ON_FIELD: derivatives_strategy_b,
    DerivativeStrategy.ANALYTIC: derivatives_analytic,
}


def lie_derivatives(
    system, t: float, y, k_max: int, strategy=DerivativeStrategy.FORWARD_ON_FIELD
) -> LieDerivatives:
    return _DISPATCH[DerivativeStrategy.parse(strategy)](system, t, y, k_max)

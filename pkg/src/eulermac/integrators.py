"""One-step maps and the fixed-stepsize driver.

Methods
-------
``EulerMaclaurin(s)``
    Implicit multi-derivative method of order ``2s``; ``s = 1`` is the
    trapezoidal rule.
``Gauss(stages)``
    Gauss-Legendre collocation of order ``2 * stages`` (2 or 3 stages).
``TaylorExplicit(p)`` / ``TaylorImplicit(p)``
    Truncated Taylor expansion at the left or right end of the step.

All implicit methods are solved by a modified Newton iteration whose matrix
is frozen at the start of the step and factored once.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .deriv import DerivativeStrategy, LieDerivatives, lie_derivatives

logger = logging.getLogger(__name__)

__all__ = [
    "BERNOULLI",
    "bernoulli",
    "NewtonConfig",
    "NonConvergenceError",
    "SingularMatrixError",
    "IntegrationError",
    "EulerMaclaurin",
    "Gauss",
    "TaylorExplicit",
    "TaylorImplicit",
    "IntegratorSpec",
    "Trajectory",
    "em_residual",
    "modified_newton_solve",
    "em_step",
    "gauss_step",
    "taylor_step",
    "make_stepper",
    "integrate",
    "parse_method",
]

# even Bernoulli numbers B_2 .. B_16
BERNOULLI: dict[int, Fraction] = {
    2: Fraction(1, 6),
    4: Fraction(-1, 30),
    6: Fraction(1, 42),
    8: Fraction(-1, 30),
    10: Fraction(5, 66),
    12: Fraction(-691, 2730),
    14: Fraction(7, 6),
    16: Fraction(-3617, 510),
}
_EM_WEIGHTS = {k: float(BERNOULLI[2 * k] / math.factorial(2 * k)) for k in range(1, 9)}
MAX_EM_STAGES = 9


def bernoulli(n: int) -> Fraction:
    """Even Bernoulli number ``B_n`` for ``n`` in 2..16."""
    try:
        return BERNOULLI[n]
    except KeyError:
        raise ValueError(f"B_{n} is not tabulated (even n in 2..16 only)") from None


# ----------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class NewtonConfig:
    """Stopping rule for the modified Newton iteration.

    The iteration stops once ``max |dy_i| / (1 + |y_i|) <= tol``.
    ``jacobian_refresh="per_step"`` rebuilds the iteration matrix at every
    step's initial state; ``"frozen"`` builds it once for the whole run.
    """

    tol: float = 1e-14
    max_iter: int = 50
    jacobian_refresh: str = "per_step"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tol must be positive")
        if self.max_iter < 1:
            raise ValueError("Newton max_iter must be >= 1")
        if self.jacobian_refresh not in ("per_step", "frozen"):
            raise ValueError(f"unknown jacobian_refresh {self.jacobian_refresh!r}")


@dataclass(frozen=True)
class EulerMaclaurin:
    s: int = 2

    def __post_init__(self):
        if not 1 <= self.s <= MAX_EM_STAGES:
            raise ValueError(f"Euler-Maclaurin s must lie in 1..{MAX_EM_STAGES}")

    @property
    def order(self) -> int:
        return 2 * self.s


@dataclass(frozen=True)
class Gauss:
    stages: int = 2

    def __post_init__(self):
        if self.stages not in (2, 3):
            raise ValueError("Gauss methods are provided with 2 or 3 stages")

    @property
    def order(self) -> int:
        return 2 * self.stages


@dataclass(frozen=True)
class TaylorExplicit:
    p: int = 4

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("Taylor order must be >= 1")

    @property
    def order(self) -> int:
        return self.p


@dataclass(frozen=True)
class TaylorImplicit(TaylorExplicit):
    pass


Method = EulerMaclaurin | Gauss | TaylorExplicit | TaylorImplicit


def parse_method(name: str, order: int) -> Method:
    """Build a method from a family name and its order (``em``/``gauss``/``taylor``/``taylor-implicit``)."""
    name = name.lower()
    if name in ("em", "euler-maclaurin", "eulermaclaurin"):
        if order % 2:
            raise ValueError("Euler-Maclaurin methods have even order")
        return EulerMaclaurin(order // 2)
    if name == "gauss":
        if order % 2:
            raise ValueError("Gauss methods have even order")
        return Gauss(order // 2)
    if name in ("taylor", "taylor-explicit"):
        return TaylorExplicit(order)
    if name == "taylor-implicit":
        return TaylorImplicit(order)
    raise ValueError(f"unknown method {name!r}; expected em, gauss, taylor or taylor-implicit")


@dataclass(frozen=True)
class IntegratorSpec:
    method: Method
    h: float
    derivative_strategy: DerivativeStrategy = DerivativeStrategy.FORWARD_ON_FIELD
    newton: NewtonConfig = field(default_factory=NewtonConfig)

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h != 0.0):
            raise ValueError("stepsize must be finite and nonzero")
        object.__setattr__(
            self, "derivative_strategy", DerivativeStrategy.parse(self.derivative_strategy)
        )


# ----------------------------------------------------------------------
# errors


class NonConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None, increment_norm=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.increment_norm = increment_norm
        self.iterations = iterations


class SingularMatrixError(ArithmeticError):
    pass


class IntegrationError(RuntimeError):
    """A step failed; ``step`` is the index of the step being attempted."""

    def __init__(self, step: int, t: float, cause: Exception):
        super().__init__(f"step {step} (t={t:.17g}) failed: {cause}")
        self.step = step
        self.t = t
        self.cause = cause


# ----------------------------------------------------------------------
# building blocks


def em_residual(system, y0, y1, h, s, lie0: LieDerivatives, lie1: LieDerivatives) -> np.ndarray:
    """Residual of the order-``2s`` Euler-Maclaurin equation at the candidate ``y1``.

    ``lie0``/``lie1`` must hold ``D_0 f .. D_{2s-3} f`` (at least ``D_0 f``).
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    res = y1 - y0 - 0.5 * h * (lie1.values[0] + lie0.values[0])
    hh = h * h
    hpow = hh
    for k in range(1, s):
        res = res + (_EM_WEIGHTS[k] * hpow) * (lie1.values[2 * k - 1] - lie0.values[2 * k - 1])
        hpow *= hh
    return res


class _Factorization:
    __slots__ = ("lu", "dim")

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if not np.all(np.isfinite(matrix)):
            raise SingularMatrixError("iteration matrix has non-finite entries")
        with np.errstate(all="ignore"), warnings.catch_warnings():
            # singularity is reported below as SingularMatrixError
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(matrix, check_finite=False)
        diag = np.abs(np.diag(lu))
        if np.any(diag == 0.0) or np.min(diag) <= 1e-300:
            raise SingularMatrixError("iteration matrix is singular")
        self.lu = (lu, piv)
        self.dim = matrix.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self.lu, rhs, check_finite=False)


def _scaled_norm(dy: np.ndarray, y: np.ndarray) -> float:
    return float(np.max(np.abs(dy) / (1.0 + np.abs(y))))


def modified_newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian,
    predictor,
    cfg: NewtonConfig = NewtonConfig(),
) -> np.ndarray:
    """Solve ``residual_fn(y) = 0`` with a fixed iteration matrix.

    ``jacobian`` is the iteration matrix (e.g. ``I - h/2 f'(y0)``), either as
    an array, factored here once, or as an already factored object with a
    ``solve`` method.  Raises :class:`NonConvergenceError` after
    ``cfg.max_iter`` iterations or when the increment fails to shrink for
    three consecutive iterations.
    """
    fact = jacobian if hasattr(jacobian, "solve") else _Factorization(jacobian)
    y = np.array(predictor, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonConvergenceError("non-finite predictor", y, math.inf, 0)
    prev = math.inf
    stalled = 0
    norm = math.inf
    for it in range(1, cfg.max_iter + 1):
        dy = fact.solve(-residual_fn(y))
        y = y + dy
        norm = _scaled_norm(dy, y)
        if not math.isfinite(norm):
            raise NonConvergenceError(
                f"Newton iteration diverged at iteration {it}", y, norm, it
            )
        if norm <= cfg.tol:
            return y
        stalled = stalled + 1 if norm >= prev else 0
        if stalled >= 3:
            raise NonConvergenceError(
                f"Newton increment stagnated at {norm:.3e} after {it} iterations", y, norm, it
            )
        prev = norm
    raise NonConvergenceError(
        f"Newton did not converge in {cfg.max_iter} iterations (increment {norm:.3e})",
        y,
        norm,
        cfg.max_iter,
    )


# ----------------------------------------------------------------------
# steppers


class _Stepper:
    """Shared machinery: derivative source, iteration matrix, Newton config."""

    def __init__(self, system, spec: IntegratorSpec):
        self.system = system
        self.spec = spec
        self.h = spec.h
        self.strategy = spec.derivative_strategy
        self.newton = spec.newton
        self._frozen = None

    def lie(self, t, y, k):
        return lie_derivatives(self.system, t, y, k, self.strategy)

    def _matrix(self, t, y) -> np.ndarray:
        raise NotImplementedError

    def factorization(self, t, y):
        if self.newton.jacobian_refresh == "frozen":
            if self._frozen is None:
                self._frozen = _Factorization(self._matrix(t, y))
            return self._frozen
        return _Factorization(self._matrix(t, y))

    def step(self, t: float, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _EMStepper(_Stepper):
    def __init__(self, system, spec):
        super().__init__(system, spec)
        self.s = spec.method.s
        # only D_1 f, D_3 f, ..., D_{2s-3} f enter besides f itself
        self.k = max(1, 2 * self.s - 2)

    def _matrix(self, t, y):
        return np.eye(len(y)) - 0.5 * self.h * self.system.jac(t, y)

    def step(self, t, y0):
        h = self.h
        lie0 = self.lie(t, y0, self.k)
        fact = self.factorization(t, y0)
        t1 = t + h

        def residual(y1):
            return em_residual(self.system, y0, y1, h, self.s, lie0, self.lie(t1, y1, self.k))

        return modified_newton_solve(residual, fact, y0 + h * lie0.values[0], self.newton)


_SQ3 = math.sqrt(3.0)
_SQ15 = math.sqrt(15.0)
_GAUSS_TABLEAUX = {
    2: (
        np.array([[0.25, 0.25 - _SQ3 / 6.0], [0.25 + _SQ3 / 6.0, 0.25]]),
        np.array([0.5, 0.5]),
        np.array([0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0]),
    ),
    3: (
        np.array(
            [
                [5.0 / 36.0, 2.0 / 9.0 - _SQ15 / 15.0, 5.0 / 36.0 - _SQ15 / 30.0],
                [5.0 / 36.0 + _SQ15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - _SQ15 / 24.0],
                [5.0 / 36.0 + _SQ15 / 30.0, 2.0 / 9.0 + _SQ15 / 15.0, 5.0 / 36.0],
            ]
        ),
        np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]),
        np.array([0.5 - _SQ15 / 10.0, 0.5, 0.5 + _SQ15 / 10.0]),
    ),
}


def gauss_tableau(stages: int):
    """Butcher coefficients ``(A, b, c)`` of the Gauss-Legendre method."""
    A, b, c = _GAUSS_TABLEAUX[stages]
    return A.copy(), b.copy(), c.copy()


class _GaussStepper(_Stepper):
    def __init__(self, system, spec):
        super().__init__(system, spec)
        self.A, self.b, self.c = _GAUSS_TABLEAUX[spec.method.stages]
        self.ns = spec.method.stages
        # y1 = y0 + sum_i d_i Z_i with d = b^T A^{-1}
        self.d = np.linalg.solve(self.A.T, self.b)

    def _matrix(self, t, y):
        n = len(y)
        return np.eye(self.ns * n) - self.h * np.kron(self.A, self.system.jac(t, y))

    def step(self, t, y0):
        h, A, ns = self.h, self.A, self.ns
        n = len(y0)
        fact = self.factorization(t, y0)
        f0 = self.system.rhs(t, y0)
        times = t + self.c * h
        Z0 = (self.c[:, None] * h) * f0[None, :]

        def residual(zflat):
            Z = zflat.reshape(ns, n)
            F = np.stack([self.system.rhs(times[i], y0 + Z[i]) for i in range(ns)])
            return (Z - h * (A @ F)).ravel()

        # increments are scaled relative to the state, not to the stage offsets
        scale_state = np.tile(y0, ns)
        cfg = self.newton

        def solve():
            z = Z0.ravel().copy()
            prev, stalled, norm = math.inf, 0, math.inf
            for it in range(1, cfg.max_iter + 1):
                dz = fact.solve(-residual(z))
                z = z + dz
                norm = _scaled_norm(dz, scale_state + z)
                if not math.isfinite(norm):
                    raise NonConvergenceError(f"stage iteration diverged at {it}", z, norm, it)
                if norm <= cfg.tol:
                    return z
                stalled = stalled + 1 if norm >= prev else 0
                if stalled >= 3:
                    raise NonConvergenceError(
                        f"stage increment stagnated at {norm:.3e} after {it} iterations",
                        z,
                        norm,
                        it,
                    )
                prev = norm
            raise NonConvergenceError(
                f"stage iteration did not converge in {cfg.max_iter} iterations "
                f"(increment {norm:.3e})",
                z,
                norm,
                cfg.max_iter,
            )

        Z = solve().reshape(ns, n)
        return y0 + self.d @ Z


class _TaylorExplicitStepper(_Stepper):
    def step(self, t, y0):
        p, h = self.spec.method.p, self.h
        lie0 = self.lie(t, y0, p)
        y1 = np.array(y0, dtype=float)
        hj = 1.0
        for j in range(1, p + 1):
            hj *= h / j
            y1 = y1 + hj * lie0.values[j - 1]
        return y1


class _TaylorImplicitStepper(_Stepper):
    def _matrix(self, t, y):
        # sum_j (-h f')^j / j!, the exact residual Jacobian when f is linear
        step = -self.h * self.system.jac(t, y)
        term = np.eye(len(y))
        out = term.copy()
        for j in range(1, self.spec.method.p + 1):
            term = term @ step / j
            out += term
        return out

    def step(self, t, y0):
        p, h = self.spec.method.p, self.h
        fact = self.factorization(t, y0)
        t1 = t + h
        coeffs = []
        c = 1.0
        for j in range(1, p + 1):
            c *= -h / j
            coeffs.append(c)

        def residual(y1):
            lie1 = self.lie(t1, y1, p)
            r = y1 - y0
            for j in range(p):
                r = r + coeffs[j] * lie1.values[j]
            return r

        f0 = self.system.rhs(t, y0)
        return modified_newton_solve(residual, fact, y0 + h * f0, self.newton)


def make_stepper(system, spec: IntegratorSpec) -> _Stepper:
    method = spec.method
    if isinstance(method, EulerMaclaurin):
        return _EMStepper(system, spec)
    if isinstance(method, Gauss):
        return _GaussStepper(system, spec)
    if isinstance(method, TaylorImplicit):
        return _TaylorImplicitStepper(system, spec)
    if isinstance(method, TaylorExplicit):
        return _TaylorExplicitStepper(system, spec)
    raise TypeError(f"unsupported method {method!r}")


def _check_method(spec, kind, name):
    if not isinstance(spec.method, kind):
        raise TypeError(f"{name} needs a {kind.__name__} spec, got {spec.method!r}")


def em_step(system, t: float, y0, spec: IntegratorSpec) -> np.ndarray:
    """One Euler-Maclaurin step from ``(t, y0)``."""
    _check_method(spec, EulerMaclaurin, "em_step")
    return make_stepper(system, spec).step(t, np.asarray(y0, dtype=float))


def gauss_step(system, t: float, y0, spec: IntegratorSpec) -> np.ndarray:
    """One Gauss-Legendre step from ``(t, y0)``."""
    _check_method(spec, Gauss, "gauss_step")
    return make_stepper(system, spec).step(t, np.asarray(y0, dtype=float))


def taylor_step(system, t: float, y0, spec: IntegratorSpec) -> np.ndarray:
    """One explicit or implicit Taylor step from ``(t, y0)``."""
    _check_method(spec, TaylorExplicit, "taylor_step")
    return make_stepper(system, spec).step(t, np.asarray(y0, dtype=float))


# ----------------------------------------------------------------------
# driver


@dataclass
class Trajectory:
    """Fixed-step integration record.

    ``states`` holds every ``stride``-th state (step 0 included);
    ``invariants`` maps each observed name to its value at every step
    ``0..n_steps``.
    """

    t0: float
    h: float
    n_steps: int
    stride: int
    states: np.ndarray
    invariants: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * self.stride * np.arange(len(self.states))

    @property
    def y0(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        if self.n_steps % self.stride:
            raise ValueError("final state not stored: n_steps is not a multiple of stride")
        return self.states[-1]

    def state(self, step: int) -> np.ndarray:
        if step % self.stride:
            raise ValueError(f"step {step} not stored (stride {self.stride})")
        return self.states[step // self.stride]

    def invariant_errors(self, name: str) -> np.ndarray:
        """``|Q(y_n) - Q(y_0)|`` for ``n = 0..n_steps``."""
        try:
            vals = self.invariants[name]
        except KeyError:
            raise KeyError(f"invariant {name!r} was not observed; have {sorted(self.invariants)}") from None
        return np.abs(vals - vals[0])


_CHUNK = 4096


def integrate(
    system,
    t0: float,
    y0,
    spec: IntegratorSpec,
    n_steps: int,
    observers: Iterable[str] | None = None,
    stride: int = 1,
) -> Trajectory:
    """Advance ``n_steps`` fixed steps.

    ``observers`` names the system invariants to sample at every step (all of
    them by default).  Invariants are evaluated in blocks of states, which
    requires them to accept a ``(dim, batch)`` array.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    names = list(system.invariants) if observers is None else list(observers)
    for name in names:
        if name not in system.invariants:
            raise KeyError(f"unknown invariant {name!r} for {system.name}")
    y = np.array(y0, dtype=float)
    dim = y.shape[0]
    stepper = make_stepper(system, spec)
    h = spec.h

    stored = [y.copy()]
    inv = {name: np.empty(n_steps + 1) for name in names}
    buf = np.empty((_CHUNK, dim))
    buf[0] = y
    filled, start = 1, 0

    def flush(count, first):
        block = buf[:count].T
        for name in names:
            inv[name][first : first + count] = system.invariants[name](block)

    clock = time.perf_counter()
    for n in range(1, n_steps + 1):
        t = t0 + (n - 1) * h
        try:
            y = stepper.step(t, y)
        except (NonConvergenceError, SingularMatrixError, ValueError, ArithmeticError) as exc:
            raise IntegrationError(n, t, exc) from exc
        if not np.all(np.isfinite(y)):
            raise IntegrationError(n, t, FloatingPointError("non-finite state"))
        if n % stride == 0:
            stored.append(y.copy())
        buf[filled] = y
        filled += 1
        if filled == _CHUNK:
            flush(filled, start)
            start += filled
            filled = 0
    if filled:
        flush(filled, start)
    wall = time.perf_counter() - clock
    return Trajectory(t0, h, n_steps, stride, np.array(stored), inv, wall)

"""Benchmark systems: pendulum, Kepler, Fermi-Pasta-Ulam, Cassini ovals.

Every vector field is written once and runs unchanged on floats and on
:class:`~eulermac.grossone.GrossValue` entries.  Invariant functions only
index ``y[i]`` and use numpy ufuncs, so they also accept a ``(dim, batch)``
array and evaluate a whole block of states at once.

Closed-form Lie derivatives (the ``analytic`` derivative source) come from
problem-specific Taylor-coefficient recurrences; they share no code with the
grossone path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import quad

from . import grossone as gm
from .grossone import GrossVector

__all__ = [
    "Reference",
    "OdeSystem",
    "HamiltonianSystem",
    "pendulum",
    "pendulum_period",
    "kepler",
    "fpu",
    "cassini",
    "cassini_r",
    "cassini_period",
    "example1",
    "example1_solution",
    "PROBLEMS",
    "get_problem",
    "symplectic_matrix",
]


@dataclass(frozen=True)
class Reference:
    """Canonical initial data; ``period`` for periodic orbits, else ``t_end`` and ``h``."""

    y0: np.ndarray
    period: float | None = None
    t_end: float | None = None
    h: float | None = None


@dataclass(frozen=True, eq=False)
class OdeSystem:
    """Black-box vector field ``y' = f(y)`` (or ``f(t, y)`` when not autonomous)."""

    name: str
    dim: int
    field: Callable
    autonomous: bool = True
    jacobian: Callable | None = None
    lie: Callable | None = None
    invariants: Mapping[str, Callable] = dc_field(default_factory=dict)
    reference: Reference | None = None
    params: Mapping[str, float] = dc_field(default_factory=dict)

    def rhs(self, t, y) -> np.ndarray:
        out = self.field(y) if self.autonomous else self.field(t, y)
        return np.array(out, dtype=float)

    def gross_rhs(self, t, y: GrossVector) -> GrossVector:
        out = self.field(y) if self.autonomous else self.field(t, y)
        return GrossVector(out, depth=y.depth)

    def jac(self, t, y) -> np.ndarray:
        if self.jacobian is None:
            raise ValueError(f"system {self.name!r} has no analytic Jacobian")
        out = self.jacobian(y) if self.autonomous else self.jacobian(t, y)
        return np.asarray(out, dtype=float)

    def lie_derivatives(self, t, y, k_max: int) -> list:
        if self.lie is None:
            raise ValueError(f"system {self.name!r} does not supply closed-form Lie derivatives")
        return self.lie(t, np.asarray(y, dtype=float), k_max)

    def invariant(self, name: str, y) -> np.ndarray:
        try:
            fn = self.invariants[name]
        except KeyError:
            raise KeyError(
                f"unknown invariant {name!r} for {self.name}; have {sorted(self.invariants)}"
            ) from None
        return fn(y)


@dataclass(frozen=True, eq=False)
class HamiltonianSystem(OdeSystem):
    """Canonical system ``y' = J grad H(y)`` with ``y = (q, p)``, ``q, p`` in R^m."""

    m: int = 1
    hamiltonian: Callable | None = None

    def H(self, y):
        return self.hamiltonian(y)


def symplectic_matrix(m: int) -> np.ndarray:
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block([[zero, eye], [-eye, zero]])


def _from_taylor(coeffs: list, k_max: int) -> list:
    """Convert Taylor coefficients ``y_[0..k_max]`` into ``[y', y'', ...]``."""
    return [math.factorial(j) * np.asarray(coeffs[j], dtype=float) for j in range(1, k_max + 1)]


def _cauchy(a: list, b: list, k: int):
    s = a[0] * b[k]
    for j in range(1, k + 1):
        s = s + a[j] * b[k - j]
    return s


# ----------------------------------------------------------------------
# pendulum


def pendulum_period(q0: float) -> float:
    """Period of the pendulum released at rest from angle ``q0``.

    ``T = 4 K(sin(q0/2))`` evaluated through the arithmetic-geometric mean:
    ``K(k) = pi / (2 AGM(1, sqrt(1 - k^2)))`` with ``sqrt(1 - k^2) = cos(q0/2)``.
    """
    if not 0.0 < q0 < math.pi:
        raise ValueError(f"q0 must lie in (0, pi), got {q0}")
    a, b = 1.0, math.cos(q0 / 2.0)
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 2.0 * math.pi / a


def _pendulum_field(y):
    return [y[1], -gm.sin(y[0])]


def _pendulum_H(y):
    return 0.5 * y[1] ** 2 - np.cos(y[0])


def _pendulum_jac(y):
    return [[0.0, 1.0], [-math.cos(y[0]), 0.0]]


def _pendulum_lie(t, y, k_max):
    q, p = [y[0]], [y[1]]
    S, C = [math.sin(y[0])], [math.cos(y[0])]
    for k in range(k_max):
        if k > 0:
            S.append(sum(j * q[j] * C[k - j] for j in range(1, k + 1)) / k)
            C.append(-sum(j * q[j] * S[k - j] for j in range(1, k + 1)) / k)
        q.append(p[k] / (k + 1))
        p.append(-S[k] / (k + 1))
    return _from_taylor([np.array([a, b]) for a, b in zip(q, p)], k_max)


def pendulum(q0: float = math.pi / 2) -> HamiltonianSystem:
    """Nonlinear pendulum ``H = p^2/2 - cos q`` released at rest from ``q0``."""
    return HamiltonianSystem(
        name="pendulum",
        dim=2,
        field=_pendulum_field,
        jacobian=_pendulum_jac,
        lie=_pendulum_lie,
        invariants={"H": _pendulum_H},
        reference=Reference(np.array([q0, 0.0]), period=pendulum_period(q0)),
        params={"q0": q0},
        m=1,
        hamiltonian=_pendulum_H,
    )


# ----------------------------------------------------------------------
# Kepler


def _kepler_field(y):
    q1, q2, p1, p2 = y[0], y[1], y[2], y[3]
    r2 = q1 * q1 + q2 * q2
    if r2 < 1e-24:
        raise ValueError("Kepler field evaluated at collision (|q| < 1e-12)")
    inv_r3 = r2**-1.5
    return [p1, p2, -q1 * inv_r3, -q2 * inv_r3]


def _kepler_H(y):
    return 0.5 * (y[2] ** 2 + y[3] ** 2) - 1.0 / np.sqrt(y[0] ** 2 + y[1] ** 2)


def _kepler_M(y):
    return y[0] * y[3] - y[1] * y[2]


def _kepler_A1(y):
    return y[3] * _kepler_M(y) - y[0] / np.sqrt(y[0] ** 2 + y[1] ** 2)


def _kepler_A2(y):
    return -y[2] * _kepler_M(y) - y[1] / np.sqrt(y[0] ** 2 + y[1] ** 2)


def _kepler_jac(y):
    q = np.array(y[:2], dtype=float)
    r2 = q @ q
    r3 = r2**1.5
    r5 = r2**2.5
    jac = np.zeros((4, 4))
    jac[0, 2] = jac[1, 3] = 1.0
    jac[2:, :2] = -np.eye(2) / r3 + 3.0 * np.outer(q, q) / r5
    return jac


def _kepler_lie(t, y, k_max):
    q1, q2, p1, p2 = [y[0]], [y[1]], [y[2]], [y[3]]
    s, u = [], []
    alpha = -1.5
    for k in range(k_max):
        s.append(_cauchy(q1, q1, k) + _cauchy(q2, q2, k))
        if k == 0:
            if s[0] < 1e-24:
                raise ValueError("Kepler field evaluated at collision (|q| < 1e-12)")
            u.append(s[0] ** alpha)
        else:
            acc = sum((alpha * j - (k - j)) * s[j] * u[k - j] for j in range(1, k + 1))
            u.append(acc / (k * s[0]))
        a1 = -_cauchy(q1, u, k)
        a2 = -_cauchy(q2, u, k)
        q1.append(p1[k] / (k + 1))
        q2.append(p2[k] / (k + 1))
        p1.append(a1 / (k + 1))
        p2.append(a2 / (k + 1))
    return _from_taylor([np.array(c) for c in zip(q1, q2, p1, p2)], k_max)


def kepler(e: float = 0.6) -> HamiltonianSystem:
    """Two-body problem in relative coordinates with eccentricity ``e``."""
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
    y0 = np.array([1.0 - e, 0.0, 0.0, math.sqrt((1.0 + e) / (1.0 - e))])
    return HamiltonianSystem(
        name="kepler",
        dim=4,
        field=_kepler_field,
        jacobian=_kepler_jac,
        lie=_kepler_lie,
        invariants={"H": _kepler_H, "M": _kepler_M, "A1": _kepler_A1, "A2": _kepler_A2},
        reference=Reference(y0, period=2.0 * math.pi),
        params={"e": e},
        m=2,
        hamiltonian=_kepler_H,
    )


# ----------------------------------------------------------------------
# Fermi-Pasta-Ulam


def fpu(m: int = 3, omega: float = 50.0, energy_form: str = "squared") -> HamiltonianSystem:
    """Chain of ``2m`` unit masses, alternating cubic-force soft springs and stiff linear springs.

    ``energy_form`` selects the oscillatory energy of each stiff spring:
    ``"squared"`` uses ``((p_{2i}-p_{2i-1})^2 + omega^2 (q_{2i}-q_{2i-1})^2) / 4``;
    ``"as_printed"`` uses the unsquared sum ``omega^2 (q_{2i}+q_{2i-1})`` in the
    position term, kept only for comparison.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if omega <= 0:
        raise ValueError("omega must be positive")
    if energy_form not in ("squared", "as_printed"):
        raise ValueError(f"unknown energy_form {energy_form!r}")
    n = 2 * m
    w2 = omega * omega
    half_w2 = 0.5 * w2

    def field(y):
        q = [0.0] + list(y[:n]) + [0.0]
        force = [0.0] * (n + 2)
        for i in range(m + 1):
            d = q[2 * i + 1] - q[2 * i]
            c = 4.0 * (d * d * d)
            force[2 * i + 1] = force[2 * i + 1] - c
            force[2 * i] = force[2 * i] + c
        for i in range(1, m + 1):
            g = half_w2 * (q[2 * i] - q[2 * i - 1])
            force[2 * i] = force[2 * i] - g
            force[2 * i - 1] = force[2 * i - 1] + g
        return list(y[n:]) + force[1 : n + 1]

    def _pad(qs):
        zeros = np.zeros_like(qs[:1])
        return np.concatenate([zeros, qs, zeros], axis=0)

    def hamiltonian(y):
        y = np.asarray(y, dtype=float)
        qp = _pad(y[:n])
        p = y[n:]
        kinetic = 0.5 * np.sum(p**2, axis=0)
        stiff = 0.25 * w2 * np.sum((qp[2 : n + 1 : 2] - qp[1:n:2]) ** 2, axis=0)
        soft = np.sum((qp[1::2] - qp[0::2]) ** 4, axis=0)
        return kinetic + stiff + soft

    def spring_energy(i):
        def energy(y):
            y = np.asarray(y, dtype=float)
            dp = y[n + 2 * i - 1] - y[n + 2 * i - 2]
            if energy_form == "squared":
                dq = (y[2 * i - 1] - y[2 * i - 2]) ** 2
            else:
                dq = y[2 * i - 1] + y[2 * i - 2]
            return 0.25 * (dp**2 + w2 * dq)

        return energy

    energies = {f"I{i}": spring_energy(i) for i in range(1, m + 1)}

    def total(y):
        return sum(fn(y) for fn in energies.values())

    def jacobian(y):
        y = np.asarray(y, dtype=float)
        qp = _pad(y[:n])
        hess = np.zeros((n + 2, n + 2))
        for i in range(m + 1):
            a, b = 2 * i, 2 * i + 1
            k = 12.0 * (qp[b] - qp[a]) ** 2
            hess[a, a] += k
            hess[b, b] += k
            hess[a, b] -= k
            hess[b, a] -= k
        for i in range(1, m + 1):
            a, b = 2 * i - 1, 2 * i
            hess[a, a] += half_w2
            hess[b, b] += half_w2
            hess[a, b] -= half_w2
            hess[b, a] -= half_w2
        jac = np.zeros((2 * n, 2 * n))
        jac[:n, n:] = np.eye(n)
        jac[n:, :n] = -hess[1 : n + 1, 1 : n + 1]
        return jac

    def lie(t, y, k_max):
        Q = [np.concatenate([[0.0], y[:n], [0.0]])]
        P = [np.asarray(y[n:], dtype=float)]
        D, D2, D3 = [], [], []
        for k in range(k_max):
            D.append(Q[k][1::2] - Q[k][0::2])
            D2.append(_cauchy(D, D, k))
            D3.append(_cauchy(D2, D, k))
            force = np.zeros(n + 2)
            c = 4.0 * D3[k]
            force[1::2] -= c
            force[0::2] += c
            g = half_w2 * (Q[k][2 : n + 1 : 2] - Q[k][1:n:2])
            force[2 : n + 1 : 2] -= g
            force[1:n:2] += g
            Q.append(np.concatenate([[0.0], P[k] / (k + 1), [0.0]]))
            P.append(force[1 : n + 1] / (k + 1))
        return _from_taylor([np.concatenate([a[1 : n + 1], b]) for a, b in zip(Q, P)], k_max)

    s2 = math.sqrt(2.0)
    q0 = np.zeros(n)
    p0 = np.zeros(n)
    if m >= 1:
        q0[0] = (1.0 - 1.0 / omega) / s2
        q0[1] = (1.0 + 1.0 / omega) / s2
        p0[1] = s2
    invariants = {"H": hamiltonian, "I_total": total}
    invariants.update(energies)
    return HamiltonianSystem(
        name="fpu",
        dim=2 * n,
        field=field,
        jacobian=jacobian,
        lie=lie,
        invariants=invariants,
        reference=Reference(np.concatenate([q0, p0]), t_end=400.0, h=0.03),
        params={"m": m, "omega": omega},
        m=n,
        hamiltonian=hamiltonian,
    )


# ----------------------------------------------------------------------
# Cassini ovals

# a^2 = 2.5 makes H(0, 1e-2) = 5.0001e-4; a = sqrt(5) reproduces T = 3.13199... at p0 = 1e-6
CASSINI_A = math.sqrt(2.5)


def cassini_r(y, a: float = CASSINI_A):
    """Orbit-shape indicator ``(1 + H/a^2)^(1/4)``; ``nan`` where ``1 + H/a^2 < 0``."""
    q, p = np.asarray(y[0], dtype=float), np.asarray(y[1], dtype=float)
    H = (q * q + p * p) ** 2 - 2.0 * a * a * (q * q - p * p)
    base = 1.0 + H / (a * a)
    with np.errstate(invalid="ignore"):
        return np.where(base >= 0.0, np.abs(base) ** 0.25, np.nan)


def cassini_period(a: float = CASSINI_A, p0: float = 1e-6, q0: float = 0.0) -> float:
    """Period of an orbit outside the lemniscate (``r > 1``) by quadrature.

    Along the level set ``w = q^2 + p^2 = -a^2 + sqrt(a^4 + 4a^2 q^2 + H)`` the
    velocity is ``dq/dt = 4p sqrt(a^4 + 4a^2 q^2 + H)``; the quarter orbit from
    ``q = 0`` to the turning point is integrated after ``q = qmax sin(theta)``.
    """
    a2 = a * a
    H = (q0 * q0 + p0 * p0) ** 2 - 2.0 * a2 * (q0 * q0 - p0 * p0)
    if H <= 0.0:
        raise ValueError("cassini_period only handles orbits enclosing both foci (H > 0)")
    qmax = math.sqrt(a2 + math.sqrt(a2 * a2 + H))

    def integrand(theta):
        q = qmax * math.sin(theta)
        S = math.sqrt(a2 * a2 + 4.0 * a2 * q * q + H)
        p2 = (H + 2.0 * a2 * q * q - q**4) / (S + q * q + a2)
        return qmax * math.cos(theta) / (math.sqrt(p2) * S)

    # near theta = 0 the orbit grazes the saddle; split the range geometrically
    edges = [0.0] + [10.0**k for k in range(-9, 0)] + [math.pi / 2]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = quad(integrand, lo, hi, limit=200, epsabs=0.0, epsrel=1e-13)
        total += val
    return total


def cassini(a: float = CASSINI_A, p0: float = 1e-2) -> HamiltonianSystem:
    """Non-separable system ``H = (q^2+p^2)^2 - 2a^2 (q^2 - p^2)`` started at ``(0, p0)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    a2 = a * a
    four_a2 = 4.0 * a2

    def field(y):
        q, p = y[0], y[1]
        w = q * q + p * p
        return [4.0 * p * w + four_a2 * p, -4.0 * q * w + four_a2 * q]

    def hamiltonian(y):
        q, p = y[0], y[1]
        return (q * q + p * p) ** 2 - 2.0 * a2 * (q * q - p * p)

    def jacobian(y):
        q, p = float(y[0]), float(y[1])
        w = q * q + p * p
        return [
            [8.0 * p * q, 4.0 * w + 8.0 * p * p + four_a2],
            [-4.0 * w - 8.0 * q * q + four_a2, -8.0 * p * q],
        ]

    def lie(t, y, k_max):
        q, p, w = [y[0]], [y[1]], []
        for k in range(k_max):
            w.append(_cauchy(q, q, k) + _cauchy(p, p, k))
            f1 = 4.0 * _cauchy(p, w, k) + four_a2 * p[k]
            f2 = -4.0 * _cauchy(q, w, k) + four_a2 * q[k]
            q.append(f1 / (k + 1))
            p.append(f2 / (k + 1))
        return _from_taylor([np.array([u, v]) for u, v in zip(q, p)], k_max)

    y0 = np.array([0.0, p0])
    period = cassini_period(a, p0) if p0 != 0.0 else None
    return HamiltonianSystem(
        name="cassini",
        dim=2,
        field=field,
        jacobian=jacobian,
        lie=lie,
        invariants={"H": hamiltonian},
        reference=Reference(y0, period=period, t_end=45.0, h=1.5e-2),
        params={"a": a, "p0": p0},
        m=1,
        hamiltonian=hamiltonian,
    )


# ----------------------------------------------------------------------
# non-autonomous demo field with known solution (1 + t) / (2.5 + t^2)


def example1_solution(t):
    return (1.0 + t) / (2.5 + t * t)


def _example1_field(t, y):
    u = y[0]
    return [(u - 2.0 * t * u * u) / (1.0 + t)]


def _example1_jac(t, y):
    return [[(1.0 - 4.0 * t * y[0]) / (1.0 + t)]]


def _example1_lie(t, y, k_max):
    # solutions are (1 + s) / (s^2 + c); expand about s = t
    c = (1.0 + t) / y[0] - t * t
    num = [1.0 + t, 1.0]
    den = [t * t + c, 2.0 * t, 1.0]
    Y = []
    for k in range(k_max + 1):
        acc = num[k] if k < len(num) else 0.0
        for j in range(1, min(k, 2) + 1):
            acc -= den[j] * Y[k - j]
        Y.append(acc / den[0])
    return _from_taylor([np.array([v]) for v in Y], k_max)


def example1() -> OdeSystem:
    """Scalar non-autonomous field ``y' = (y - 2 t y^2) / (1 + t)`` with ``y(0) = 0.4``."""
    return OdeSystem(
        name="example1",
        dim=1,
        field=_example1_field,
        autonomous=False,
        jacobian=_example1_jac,
        lie=_example1_lie,
        reference=Reference(np.array([0.4])),
    )


PROBLEMS: dict[str, Callable[..., HamiltonianSystem]] = {
    "pendulum": pendulum,
    "kepler": kepler,
    "fpu": fpu,
    "cassini": cassini,
}


def get_problem(name: str, **params) -> HamiltonianSystem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(PROBLEMS)}") from None
    return factory(**params)

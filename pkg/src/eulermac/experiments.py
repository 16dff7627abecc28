"""Error metrics, conservation tracking, convergence tables and work-precision data."""

from __future__ import annotations

import hashlib
import json
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .integrators import (
    Gauss,
    IntegrationError,
    IntegratorSpec,
    NewtonConfig,
    Trajectory,
    integrate,
)

__all__ = [
    "ExperimentReport",
    "ConvergenceRow",
    "WorkPrecisionPoint",
    "ReferenceCache",
    "periodic_error_series",
    "invariant_error_series",
    "drift_slope",
    "growth_exponent",
    "conservation_run",
    "convergence_rates",
    "convergence_study",
    "reference_solution",
    "work_precision",
]


def _check_period(traj: Trajectory, steps_per_period: int) -> int:
    if steps_per_period < 1:
        raise ValueError("steps_per_period must be positive")
    if traj.n_steps % steps_per_period:
        raise ValueError(
            f"trajectory length {traj.n_steps} is not a multiple of {steps_per_period} steps per period"
        )
    return traj.n_steps // steps_per_period


def periodic_error_series(traj: Trajectory, y0, steps_per_period: int) -> np.ndarray:
    """``||y_{kP} - y0||_1`` for ``k = 1..n_steps / P``."""
    periods = _check_period(traj, steps_per_period)
    if steps_per_period % traj.stride:
        raise ValueError(
            f"period of {steps_per_period} steps is not a multiple of the storage stride {traj.stride}"
        )
    every = steps_per_period // traj.stride
    picked = traj.states[every :: every][:periods]
    return np.abs(picked - np.asarray(y0, dtype=float)).sum(axis=1)


def invariant_error_series(traj: Trajectory, name: str, steps_per_period: int) -> np.ndarray:
    """Per-period maxima of ``|Q(y_n) - Q(y_0)|`` over steps ``(k-1)P+1 .. kP``."""
    periods = _check_period(traj, steps_per_period)
    err = traj.invariant_errors(name)[1:]
    return err.reshape(periods, steps_per_period).max(axis=1)


def drift_slope(series) -> float:
    """Least-squares slope per sample divided by the mean level.

    Returns 0 for an identically zero series.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 2:
        raise ValueError("need at least two samples to fit a slope")
    mean = y.mean()
    if mean == 0.0:
        return 0.0
    slope = np.polyfit(np.arange(1, y.size + 1, dtype=float), y, 1)[0]
    return float(slope / mean)


def growth_exponent(series) -> float:
    """Log-log slope of ``series[k-1]`` against ``k``; nonpositive samples are skipped."""
    y = np.asarray(series, dtype=float)
    k = np.arange(1, y.size + 1, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        return 0.0
    return float(np.polyfit(np.log(k[keep]), np.log(y[keep]), 1)[0])


@dataclass
class ExperimentReport:
    problem: str
    method: str
    h: float
    steps_per_period: int
    n_steps: int
    wall_time: float
    solution_errors: np.ndarray
    invariant_errors: dict = field(default_factory=dict)

    @property
    def periods(self) -> int:
        return self.n_steps // self.steps_per_period

    def max_invariant_error(self, name: str) -> float:
        return float(np.max(self.invariant_errors[name]))


def conservation_run(
    system,
    spec: IntegratorSpec,
    steps_per_period: int,
    periods: int,
    y0=None,
    observers=None,
    stride: int | None = None,
) -> ExperimentReport:
    """Integrate ``periods`` windows of ``steps_per_period`` steps and summarize them.

    ``stride`` defaults to one stored state per window, which is all the
    solution-error series needs.
    """
    y0 = system.reference.y0 if y0 is None else np.asarray(y0, dtype=float)
    stride = steps_per_period if stride is None else stride
    n = steps_per_period * periods
    traj = integrate(system, 0.0, y0, spec, n, observers=observers, stride=stride)
    return ExperimentReport(
        problem=system.name,
        method=repr(spec.method),
        h=spec.h,
        steps_per_period=steps_per_period,
        n_steps=n,
        wall_time=traj.wall_time,
        solution_errors=periodic_error_series(traj, y0, steps_per_period),
        invariant_errors={
            name: invariant_error_series(traj, name, steps_per_period) for name in traj.invariants
        },
    )


@dataclass
class ConvergenceRow:
    N: int
    error: float
    rate: float | None = None
    failure: str | None = None


def convergence_rates(N_list: Sequence[int], errors: Sequence[float]) -> list:
    """``log(e_i / e_{i+1}) / log(N_{i+1} / N_i)`` attached to row ``i``; the last entry is None."""
    rates = []
    for i in range(len(errors)):
        if i + 1 >= len(errors):
            rates.append(None)
            continue
        e1, e2 = errors[i], errors[i + 1]
        if not (e1 > 0 and e2 > 0 and math.isfinite(e1) and math.isfinite(e2)):
            rates.append(None)
            continue
        rates.append(math.log(e1 / e2) / math.log(N_list[i + 1] / N_list[i]))
    return rates


def convergence_study(
    system,
    method,
    N_list: Sequence[int],
    horizon_periods: int = 10,
    target_invariant: str = "M",
    strategy="b",
    newton: NewtonConfig | None = None,
    y0=None,
) -> list:
    """Max invariant error over ``horizon_periods`` periods for each mesh size ``N``.

    A failing integration yields a row with ``error = nan`` and the failure
    message instead of aborting the study.
    """
    N_list = list(N_list)
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly ascending")
    period = system.reference.period
    if period is None:
        raise ValueError(f"{system.name} has no reference period")
    y0 = system.reference.y0 if y0 is None else y0
    newton = newton or NewtonConfig()
    rows = []
    for N in N_list:
        spec = IntegratorSpec(method, period / N, strategy, newton)
        try:
            traj = integrate(
                system, 0.0, y0, spec, N * horizon_periods,
                observers=[target_invariant], stride=N * horizon_periods,
            )
            rows.append(ConvergenceRow(N, float(traj.invariant_errors(target_invariant).max())))
        except IntegrationError as exc:
            rows.append(ConvergenceRow(N, math.nan, failure=str(exc)))
    for row, rate in zip(rows, convergence_rates(N_list, [r.error for r in rows])):
        row.rate = rate
    return rows


# ----------------------------------------------------------------------
# reference solutions


class ReferenceCache:
    """Directory of final-state files keyed by problem, data and stepsize.

    File layout (little endian): 8-byte magic, uint32 version, uint32 key
    length, UTF-8 JSON key, uint32 dimension, float64 state.
    """

    MAGIC = b"EMREFSOL"
    VERSION = 1

    def __init__(self, directory):
        self.directory = Path(directory)

    @staticmethod
    def key(system, y0, t_end: float, h: float) -> str:
        return json.dumps(
            {
                "problem": system.name,
                "params": {k: repr(v) for k, v in sorted(dict(system.params).items())},
                "y0": [float(v).hex() for v in np.asarray(y0, dtype=float)],
                "t_end": float(t_end).hex(),
                "h": float(h).hex(),
            },
            sort_keys=True,
        )

    def _path(self, key: str) -> Path:
        return self.directory / (hashlib.sha256(key.encode()).hexdigest()[:24] + ".ref")

    def load(self, key: str):
        path = self._path(key)
        if not path.exists():
            return None
        raw = path.read_bytes()
        try:
            magic, version, klen = struct.unpack_from("<8sII", raw, 0)
            off = 16
            if magic != self.MAGIC or version != self.VERSION:
                return None
            stored = raw[off : off + klen].decode()
            off += klen
            if stored != key:
                return None
            (dim,) = struct.unpack_from("<I", raw, off)
            off += 4
            return np.frombuffer(raw, dtype="<f8", count=dim, offset=off).copy()
        except (struct.error, ValueError, UnicodeDecodeError):
            return None

    def store(self, key: str, state) -> Path:
        state = np.ascontiguousarray(state, dtype="<f8")
        kb = key.encode()
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._path(key)
        blob = struct.pack("<8sII", self.MAGIC, self.VERSION, len(kb)) + kb
        blob += struct.pack("<I", state.size) + state.tobytes()
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(blob)
        tmp.replace(path)
        return path


def reference_solution(system, y0, t_end: float, h: float, cache: ReferenceCache | None = None):
    """State at ``t_end`` from Gauss-6 with stepsize ``h / 20`` (rounded to fit ``t_end``)."""
    n = max(1, round(20 * t_end / h))
    h_ref = t_end / n
    key = ReferenceCache.key(system, y0, t_end, h_ref) if cache else None
    if cache is not None:
        hit = cache.load(key)
        if hit is not None:
            return hit
    spec = IntegratorSpec(Gauss(3), h_ref)
    traj = integrate(system, 0.0, y0, spec, n, observers=[], stride=n)
    final = traj.final_state
    if cache is not None:
        cache.store(key, final)
    return final


@dataclass
class WorkPrecisionPoint:
    h: float
    n_steps: int
    time_s: float
    error: float


def work_precision(
    system,
    method,
    h_list: Sequence[float],
    horizon: float,
    reference=None,
    repeats: int = 3,
    strategy="b",
    newton: NewtonConfig | None = None,
    y0=None,
    cache: ReferenceCache | None = None,
) -> list:
    """Best-of-``repeats`` wall time and final ``||y_n - y_ref||_1`` for each stepsize.

    Each ``h`` must divide ``horizon`` (to 1e-9 relative).  Without an
    explicit ``reference`` state, one is computed from the smallest ``h``.
    """
    y0 = system.reference.y0 if y0 is None else np.asarray(y0, dtype=float)
    newton = newton or NewtonConfig()
    counts = []
    for h in h_list:
        n = round(horizon / h)
        if n < 1 or abs(n * h - horizon) > 1e-9 * abs(horizon):
            raise ValueError(f"stepsize {h} does not divide the horizon {horizon}")
        counts.append(n)
    if reference is None:
        reference = reference_solution(system, y0, horizon, min(h_list), cache)
    reference = np.asarray(reference, dtype=float)
    points = []
    for h, n in zip(h_list, counts):
        spec = IntegratorSpec(method, h, strategy, newton)
        best = math.inf
        final = None
        for _ in range(max(1, repeats)):
            start = time.perf_counter()
            traj = integrate(system, 0.0, y0, spec, n, observers=[], stride=n)
            best = min(best, time.perf_counter() - start)
            final = traj.final_state
        points.append(WorkPrecisionPoint(h, n, best, float(np.abs(final - reference).sum())))
    return points

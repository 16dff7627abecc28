"""Command-line front end.

Subcommands: ``run``, ``convergence``, ``wpd`` and ``deriv-demo``.  Results go
to CSV (stdout or ``--output``), a short summary goes to stderr.  Options may
also come from a ``key = value`` file given with ``--config``; flags on the
command line take precedence.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .deriv import (
    _gross_time,
    _microsteps,
    derivatives_analytic,
    derivatives_strategy_a,
    derivatives_strategy_b,
    euler_microsteps,
    forward_difference,
)
from .experiments import ReferenceCache, convergence_study, work_precision
from .grossone import format_gross
from .integrators import IntegrationError, IntegratorSpec, NewtonConfig, integrate, parse_method
from .problems import PROBLEMS, HamiltonianSystem, example1, get_problem

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# per-problem defaults mirroring the published experiments
_DEFAULT_N = {"pendulum": 28, "kepler": 400}
_DEFAULT_H = {"fpu": 0.03, "cassini": 1.5e-2}
_PROBLEM_PARAMS = ("e", "m", "omega", "a", "q0", "p0")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str
    params: dict = field(default_factory=dict)
    method: str = "em"
    order: int = 4
    h: float | None = None
    N: int | None = None
    periods: int | None = None
    steps: int | None = None
    strategy: str = "b"
    tol: float = 1e-14
    max_iter: int = 50
    output: str = "-"
    stride: int = 1

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(
                f"unknown problem {self.problem!r}; available problems: {', '.join(PROBLEMS)}"
            )
        if (self.h is None) == (self.N is None):
            raise ConfigError("give exactly one of --h and --N")
        if self.h is not None and not (math.isfinite(self.h) and self.h > 0):
            raise ConfigError("--h must be positive")
        for name in ("N", "periods", "steps", "stride", "max_iter", "order"):
            val = getattr(self, name)
            if val is not None and val < 1:
                raise ConfigError(f"--{name.replace('_', '-')} must be a positive integer")
        if self.periods is not None and self.steps is not None:
            raise ConfigError("give at most one of --periods and --steps")
        try:
            parse_method(self.method, self.order)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.strategy not in ("a", "b", "analytic"):
            raise ConfigError(f"unknown derivative strategy {self.strategy!r}")


# ----------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(stream, header, rows, config: dict | None = None) -> None:
    for key, value in (config or {}).items():
        stream.write(f"# {key} = {value}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def read_csv(source):
    """Parse a CSV written by this tool into ``(config, header, data)``.

    ``data`` is a float array; empty cells become NaN.
    """
    text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    config, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            config[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    data = [[float(c) if c else math.nan for c in row] for row in reader]
    return config, header, np.array(data, dtype=float).reshape(len(data), len(header))


def _open_output(path: str):
    if path in ("-", ""):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _state_names(system) -> list:
    if isinstance(system, HamiltonianSystem):
        m = system.m
        return [f"q{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(m)]
    return [f"y{i + 1}" for i in range(system.dim)]


# ----------------------------------------------------------------------
# argument handling


def _read_config_file(path) -> list:
    tokens = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        tokens += ["--" + key.strip().replace("_", "-"), value.strip()]
    return tokens


def _add_problem_args(p: argparse.ArgumentParser, default_problem=None):
    p.add_argument("--problem", default=default_problem, help=f"one of {', '.join(PROBLEMS)}")
    p.add_argument("--e", type=float, help="Kepler eccentricity")
    p.add_argument("--m", type=int, help="FPU number of stiff springs")
    p.add_argument("--omega", type=float, help="FPU stiffness")
    p.add_argument("--a", type=float, help="Cassini focal parameter")
    p.add_argument("--q0", type=float, help="pendulum initial angle")
    p.add_argument("--p0", type=float, help="Cassini initial momentum")


def _add_method_args(p: argparse.ArgumentParser):
    p.add_argument("--method", default="em", help="em, gauss, taylor or taylor-implicit")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--strategy", default="b", help="derivative source: a, b or analytic")
    p.add_argument("--tol", type=float, default=1e-14, help="Newton tolerance")
    p.add_argument("--max-iter", type=int, default=50, help="Newton iteration cap")
    p.add_argument("--output", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--config", help="key = value file with default options")


def _int_list(text: str) -> list:
    return [int(v) for v in text.replace(",", " ").split()]


def _float_list(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eulermac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate one problem and write the trajectory")
    _add_problem_args(run)
    _add_method_args(run)
    run.add_argument("--h", type=float, help="stepsize")
    run.add_argument("--N", type=int, help="steps per period")
    run.add_argument("--periods", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--stride", type=int, default=1, help="write every stride-th step")

    conv = sub.add_parser("convergence", help="invariant error versus mesh size")
    _add_problem_args(conv, "kepler")
    _add_method_args(conv)
    conv.add_argument("--N-list", dest="N_list", type=_int_list, default=[32, 64, 128, 256, 512])
    conv.add_argument("--periods", type=int, default=10)
    conv.add_argument("--invariant", help="invariant to track (default M for kepler, else H)")

    wpd = sub.add_parser("wpd", help="work-precision sweep")
    _add_problem_args(wpd, "pendulum")
    _add_method_args(wpd)
    wpd.add_argument("--h-list", dest="h_list", type=_float_list)
    wpd.add_argument("--N-list", dest="N_list", type=_int_list, help="steps per period instead of h")
    wpd.add_argument("--periods", type=int, default=10, help="horizon in periods")
    wpd.add_argument("--t-end", dest="t_end", type=float, help="horizon in time units")
    wpd.add_argument("--repeats", type=int, default=3)
    wpd.add_argument("--cache-dir", dest="cache_dir", default=".eulermac_cache")

    demo = sub.add_parser("deriv-demo", help="derivatives of the scalar demo field via gross numbers")
    demo.add_argument("--strategy", default="all", help="a, b, analytic or all")
    demo.add_argument("--t0", type=float, default=0.0)
    demo.add_argument("--y0", type=float, default=0.4)
    demo.add_argument("--k", type=int, default=3, help="number of derivatives")
    demo.add_argument("--config", help="key = value file with default options")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        extra = _read_config_file(args.config)
        at = argv.index(args.command) + 1
        args = parser.parse_args(argv[:at] + extra + argv[at:])
    return args


def _problem_params(args) -> dict:
    return {k: getattr(args, k) for k in _PROBLEM_PARAMS if getattr(args, k, None) is not None}


def _make_problem(args):
    if args.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {args.problem!r}; available problems: {', '.join(PROBLEMS)}")
    try:
        return get_problem(args.problem, **_problem_params(args))
    except TypeError as exc:
        raise ConfigError(f"bad parameter for {args.problem}: {exc}") from None


def _newton(args) -> NewtonConfig:
    try:
        return NewtonConfig(tol=args.tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ----------------------------------------------------------------------
# subcommands


def _run_config(args) -> RunConfig:
    h, N = args.h, args.N
    if h is None and N is None:
        if args.problem in _DEFAULT_N:
            N = _DEFAULT_N[args.problem]
        elif args.problem in _DEFAULT_H:
            h = _DEFAULT_H[args.problem]
    cfg = RunConfig(
        problem=args.problem or "",
        params=_problem_params(args),
        method=args.method,
        order=args.order,
        h=h,
        N=N,
        periods=args.periods,
        steps=args.steps,
        strategy=args.strategy,
        tol=args.tol,
        max_iter=args.max_iter,
        output=args.output,
        stride=args.stride,
    )
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = _run_config(args)
    system = _make_problem(args)
    ref = system.reference
    period = ref.period
    if cfg.N is not None:
        if period is None:
            raise ConfigError(f"{system.name} has no period; use --h")
        h = period / cfg.N
    else:
        h = cfg.h
    if cfg.steps is not None:
        n = cfg.steps
    elif cfg.periods is not None:
        if period is None:
            raise ConfigError(f"{system.name} has no period; use --steps")
        n = round(cfg.periods * period / h)
    elif cfg.N is not None:
        n = cfg.N
    elif ref.t_end is not None:
        n = max(1, math.floor(ref.t_end / h + 1e-9))
    else:
        n = round(period / h)
    spec = IntegratorSpec(parse_method(cfg.method, cfg.order), h, cfg.strategy, _newton(args))
    try:
        traj = integrate(system, 0.0, ref.y0, spec, n, stride=cfg.stride)
    except IntegrationError as exc:
        cause = exc.cause
        detail = ""
        if getattr(cause, "iterations", None) is not None:
            detail = f" [newton iterations={cause.iterations}, increment={cause.increment_norm:.3e}]"
        print(f"eulermac: integration failed at {exc}{detail}", file=sys.stderr)
        return EXIT_NUMERIC

    names = list(traj.invariants)
    errors = {k: traj.invariant_errors(k) for k in names}
    header = ["step", "t"] + _state_names(system) + [f"err_{k}" for k in names]
    steps = np.arange(1, len(traj.states)) * cfg.stride
    rows = (
        [int(s), traj.t0 + s * h, *traj.states[i + 1], *(errors[k][s] for k in names)]
        for i, s in enumerate(steps)
    )
    echo = {**asdict(cfg), "params": dict(system.params), "h_resolved": repr(h), "steps_resolved": n}
    out, close = _open_output(cfg.output)
    try:
        write_csv(out, header, rows, echo)
    finally:
        if close:
            out.close()

    last = traj.states[-1]
    summary = [f"{system.name} {spec.method!r} h={h:.6g} steps={n} time={traj.wall_time:.3f}s"]
    summary.append(f"final ||y_n - y0||_1 = {np.abs(last - traj.y0).sum():.6e} (step {steps[-1] if len(steps) else 0})")
    summary += [f"max |{k} - {k}0| = {errors[k].max():.6e}" for k in names]
    print("; ".join(summary), file=sys.stderr)
    return EXIT_OK


def cmd_convergence(args) -> int:
    system = _make_problem(args)
    if system.reference.period is None:
        raise ConfigError(f"{system.name} has no period; convergence tables need one")
    try:
        method = parse_method(args.method, args.order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    invariant = args.invariant or ("M" if "M" in system.invariants else "H")
    if invariant not in system.invariants:
        raise ConfigError(f"unknown invariant {invariant!r}; have {', '.join(system.invariants)}")
    if not args.N_list or any(n < 1 for n in args.N_list):
        raise ConfigError("--N-list needs positive integers")
    try:
        rows = convergence_study(
            system, method, args.N_list, args.periods, invariant, args.strategy, _newton(args)
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    echo = {
        "command": "convergence",
        "problem": system.name,
        "params": dict(system.params),
        "method": repr(method),
        "periods": args.periods,
        "invariant": invariant,
        "strategy": args.strategy,
    }
    for r in rows:
        if r.failure:
            echo[f"failure_N{r.N}"] = r.failure
    out, close = _open_output(args.output)
    try:
        write_csv(out, ["N", "error", "rate"], ([r.N, r.error, r.rate] for r in rows), echo)
    finally:
        if close:
            out.close()
    failed = [r.N for r in rows if r.failure]
    msg = f"{len(rows)} rows" + (f", failed at N={failed}" if failed else "")
    print(f"convergence {system.name} {method!r}: {msg}", file=sys.stderr)
    return EXIT_OK


def cmd_wpd(args) -> int:
    system = _make_problem(args)
    period = system.reference.period
    try:
        method = parse_method(args.method, args.order)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.t_end is not None:
        horizon = args.t_end
    elif period is not None:
        horizon = args.periods * period
    else:
        horizon = system.reference.t_end
    if args.h_list and args.N_list:
        raise ConfigError("give at most one of --h-list and --N-list")
    if args.N_list:
        if period is None:
            raise ConfigError(f"{system.name} has no period; use --h-list")
        h_list = [period / n for n in args.N_list]
    elif args.h_list:
        h_list = args.h_list
    elif period is not None:
        h_list = [period / n for n in (16, 32, 64, 128, 256)]
    else:
        raise ConfigError("--h-list is required for problems without a period")
    if any(not h > 0 for h in h_list):
        raise ConfigError("stepsizes must be positive")
    cache = ReferenceCache(args.cache_dir) if args.cache_dir else None
    try:
        points = work_precision(
            system, method, h_list, horizon, repeats=args.repeats,
            strategy=args.strategy, newton=_newton(args), cache=cache,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    echo = {
        "command": "wpd",
        "problem": system.name,
        "params": dict(system.params),
        "method": repr(method),
        "horizon": repr(horizon),
        "strategy": args.strategy,
        "repeats": args.repeats,
        "reference": "Gauss(stages=3) at h_min/20",
    }
    out, close = _open_output(args.output)
    try:
        write_csv(out, ["h", "time_s", "error"], ([p.h, p.time_s, p.error] for p in points), echo)
    finally:
        if close:
            out.close()
    print(f"wpd {system.name} {method!r}: {len(points)} stepsizes", file=sys.stderr)
    return EXIT_OK


def cmd_deriv_demo(args) -> int:
    system = example1()
    k = args.k
    if k < 1:
        raise ConfigError("--k must be positive")
    wanted = ("a", "b", "analytic") if args.strategy == "all" else (args.strategy,)
    out = io.StringIO()
    out.write(f"y' = (y - 2 t y^2) / (1 + t),  t0 = {args.t0!r},  y0 = {args.y0!r}\n")
    for strategy in wanted:
        if strategy == "a":
            out.write(f"\nstrategy a: micro-states at depth {k}\n")
            states = euler_microsteps(system, args.t0, [args.y0], k, k)
            for j, s in enumerate(states):
                out.write(f"  y{j} = {format_gross(s[0].coeffs)}\n")
            for j in range(1, k + 1):
                d = forward_difference(states, j)[0]
                out.write(f"  Delta^{j} y0 = {format_gross(d.coeffs)}\n")
            lie = derivatives_strategy_a(system, args.t0, [args.y0], k)
        elif strategy == "b":
            depth = k - 1
            out.write(f"\nstrategy b: field values at depth {depth}\n")
            if depth >= 1:
                states, fields = _microsteps(system, args.t0, np.array([args.y0]), depth, depth)
                fields.append(system.gross_rhs(_gross_time(args.t0, depth, depth), states[-1]))
                for j, s in enumerate(states):
                    out.write(f"  y{j} = {format_gross(s[0].coeffs)}\n")
                for j, f in enumerate(fields):
                    out.write(f"  f(t{j}, y{j}) = {format_gross(f[0].coeffs)}\n")
                for j in range(1, depth + 1):
                    d = forward_difference(fields, j)[0]
                    out.write(f"  Delta^{j} f0 = {format_gross(d.coeffs)}\n")
            lie = derivatives_strategy_b(system, args.t0, [args.y0], k)
        elif strategy == "analytic":
            out.write("\nanalytic: closed-form solution family\n")
            lie = derivatives_analytic(system, args.t0, [args.y0], k)
        else:
            raise ConfigError(f"unknown strategy {strategy!r}; expected a, b, analytic or all")
        for j in range(1, k + 1):
            out.write(f"  y^({j})(t0) = {float(lie.derivative(j)[0]):.17g}\n")
    sys.stdout.write(out.getvalue())
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "convergence": cmd_convergence,
    "wpd": cmd_wpd,
    "deriv-demo": cmd_deriv_demo,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"eulermac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

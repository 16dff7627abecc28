"""Truncated arithmetic on grossone numerals with non-positive grosspowers.

A :class:`GrossValue` of depth ``K`` stores the grossdigits of

    C = c0 + c1*G^-1 + c2*G^-2 + ... + cK*G^-K

where ``G`` is grossone.  Every operation truncates eagerly at grosspower
``-K``, so the infinitesimal tail behaves like a truncated power series in
``G^-1``.  This is all that is needed to run explicit Euler micro-steps with
stepsize ``G^-1`` and read exact derivatives off the grossdigits.

Vector fields are written once and evaluated either on floats or on
:class:`GrossValue` entries; the module-level :func:`sin`, :func:`cos`,
:func:`exp`, :func:`sqrt` and :func:`log` dispatch on the argument type so a
field can call them without caring which arithmetic it runs under.
"""

from __future__ import annotations

import math
from operator import add as _add, neg as _neg, sub as _sub
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "GrossValue",
    "GrossVector",
    "DepthMismatchError",
    "GrossDomainError",
    "add",
    "mul",
    "div",
    "elem",
    "coeff_at",
    "lift",
    "sin",
    "cos",
    "exp",
    "sqrt",
    "log",
    "format_gross",
]

_REAL = (int, float, np.integer, np.floating)
_object_new = object.__new__


class DepthMismatchError(ValueError):
    """Raised when two gross numbers of different depth are combined."""


class GrossDomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


def format_gross(coeffs: Sequence[float], digits: int | None = 17) -> str:
    """Render grossdigits as ``c0 + c1*G^-1 + ...``.

    ``digits=None`` uses the shortest round-trip representation of each digit.
    Zero infinitesimal digits are skipped.
    """

    def fmt(x: float) -> str:
        return repr(float(x)) if digits is None else format(float(x), f".{digits}g")

    parts = [fmt(coeffs[0])]
    for j, c in enumerate(coeffs[1:], start=1):
        if c == 0.0:
            continue
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {fmt(abs(c))}*G^-{j}")
    return " ".join(parts)


class GrossValue:
    """Real number with an infinitesimal tail truncated at grosspower ``-depth``.

    Parameters
    ----------
    coeffs
        Grossdigits ordered by decreasing grosspower: ``coeffs[j]`` multiplies
        ``G^-j``; ``coeffs[0]`` is the finite part.
    depth
        Optional; when given, ``coeffs`` is zero-padded (or must fit) to
        ``depth + 1`` digits.

    Notes
    -----
    Instances are immutable.  Operands of a binary operation must share the
    same depth; plain reals are accepted anywhere and act on the finite part.
    """

    __slots__ = ("_c",)
    # numpy must defer to our reflected operators instead of broadcasting
    __array_ufunc__ = None

    def __init__(self, coeffs: Iterable[float] | float, depth: int | None = None):
        if isinstance(coeffs, _REAL):
            coeffs = [coeffs]
        c = tuple(float(x) for x in coeffs)
        if not c:
            raise ValueError("a gross number needs at least its finite part")
        if depth is not None:
            if depth < 0:
                raise ValueError("depth must be non-negative")
            if len(c) > depth + 1:
                raise ValueError(
                    f"{len(c)} grossdigits do not fit depth {depth}; "
                    "only grosspowers 0..-depth are representable"
                )
            c = c + (0.0,) * (depth + 1 - len(c))
        self._c = c

    @classmethod
    def lift(cls, x: float, depth: int) -> "GrossValue":
        """Embed a real number at the given depth (zero tail)."""
        return _new((float(x),) + (0.0,) * depth)

    @classmethod
    def infinitesimal(cls, depth: int, power: int = 1) -> "GrossValue":
        """Return ``G^-power`` at the given depth."""
        if power < 0:
            raise ValueError("positive grosspowers are not representable")
        c = [0.0] * (depth + 1)
        if power <= depth:
            c[power] = 1.0
        return _new(tuple(c))

    # ------------------------------------------------------------------
    @property
    def coeffs(self) -> tuple:
        return self._c

    @property
    def depth(self) -> int:
        return len(self._c) - 1

    @property
    def finite(self) -> float:
        return self._c[0]

    def coeff_at(self, k: int) -> float:
        """Grossdigit of ``G^-k``."""
        if k < 0 or k > len(self._c) - 1:
            raise IndexError(f"grosspower -{k} is beyond depth {self.depth}")
        return self._c[k]

    def shift(self, n: int = 1) -> "GrossValue":
        """Multiply by ``G^-n`` and truncate."""
        c = self._c
        if n <= 0:
            if n == 0:
                return self
            raise ValueError("shift must be non-negative")
        k = len(c)
        if n >= k:
            return _new((0.0,) * k)
        return _new((0.0,) * n + c[: k - n])

    def is_finite_only(self) -> bool:
        return not any(self._c[1:])

    # ------------------------------------------------------------------
    def _check(self, other: "GrossValue") -> None:
        if len(other._c) != len(self._c):
            raise DepthMismatchError(
                f"depth {self.depth} combined with depth {other.depth}"
            )

    def __add__(self, other):
        if type(other) is GrossValue:
            a = self._c
            b = other._c
            if len(a) != len(b):
                self._check(other)
            return _new(tuple(map(_add, a, b)))
        if isinstance(other, _REAL):
            c = self._c
            return _new((c[0] + other,) + c[1:])
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is GrossValue:
            a = self._c
            b = other._c
            if len(a) != len(b):
                self._check(other)
            return _new(tuple(map(_sub, a, b)))
        if isinstance(other, _REAL):
            c = self._c
            return _new((c[0] - other,) + c[1:])
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _REAL):
            c = self._c
            return _new((other - c[0],) + tuple(map(_neg, c[1:])))
        return NotImplemented

    def __neg__(self):
        return _new(tuple(-x for x in self._c))

    def __pos__(self):
        return self

    def __mul__(self, other):
        if type(other) is GrossValue:
            a = self._c
            b = other._c
            n = len(a)
            if n != len(b):
                self._check(other)
            if n == 2:
                a0, a1 = a
                b0, b1 = b
                return _new((a0 * b0, a0 * b1 + a1 * b0))
            if n == 3:
                a0, a1, a2 = a
                b0, b1, b2 = b
                return _new((a0 * b0, a0 * b1 + a1 * b0, a0 * b2 + a1 * b1 + a2 * b0))
            if n == 4:
                a0, a1, a2, a3 = a
                b0, b1, b2, b3 = b
                return _new(
                    (
                        a0 * b0,
                        a0 * b1 + a1 * b0,
                        a0 * b2 + a1 * b1 + a2 * b0,
                        a0 * b3 + a1 * b2 + a2 * b1 + a3 * b0,
                    )
                )
            if n == 1:
                return _new((a[0] * b[0],))
            out = []
            for j in range(n):
                s = 0.0
                for i in range(j + 1):
                    s += a[i] * b[j - i]
                out.append(s)
            return _new(tuple(out))
        if isinstance(other, _REAL):
            return _new(tuple([x * other for x in self._c]))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if type(other) is GrossValue:
            self._check(other)
            return self * other.reciprocal()
        if isinstance(other, _REAL):
            return _new(tuple(x / other for x in self._c))
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _REAL):
            return self.reciprocal() * other
        return NotImplemented

    def __pow__(self, exponent):
        if isinstance(exponent, GrossValue):
            return NotImplemented
        if isinstance(exponent, (int, np.integer)):
            return self.powi(int(exponent))
        if isinstance(exponent, _REAL):
            return self.power(float(exponent))
        return NotImplemented

    def __abs__(self):
        for x in self._c:
            if x != 0.0:
                return -self if x < 0 else self
        return self

    # finite-part ordering only
    def __lt__(self, other):
        return self._c[0] < _finite(other)

    def __le__(self, other):
        return self._c[0] <= _finite(other)

    def __gt__(self, other):
        return self._c[0] > _finite(other)

    def __ge__(self, other):
        return self._c[0] >= _finite(other)

    def __eq__(self, other):
        if type(other) is GrossValue:
            return self._c == other._c
        if isinstance(other, _REAL):
            return self._c[0] == other and self.is_finite_only()
        return NotImplemented

    def __hash__(self):
        if self.is_finite_only():
            return hash(self._c[0])
        return hash(self._c)

    def __repr__(self):
        return f"GrossValue({list(self._c)!r})"

    def __str__(self):
        return format_gross(self._c)

    # ------------------------------------------------------------------
    # elementary functions: Taylor expansion about the finite part
    def _taylor(self, taylor_coeffs: Sequence[float]) -> "GrossValue":
        """Evaluate ``sum_k taylor_coeffs[k] * t**k`` with ``t`` the tail."""
        c = self._c
        n = len(c)
        if n == 1:
            return _new((taylor_coeffs[0],))
        tail = _new((0.0,) + c[1:])
        acc = _new((taylor_coeffs[n - 1],) + (0.0,) * (n - 1))
        for k in range(n - 2, -1, -1):
            acc = acc * tail
            acc = _new((acc._c[0] + taylor_coeffs[k],) + acc._c[1:])
        return acc

    def sin(self) -> "GrossValue":
        x = self._c[0]
        s, co = math.sin(x), math.cos(x)
        cycle = (s, co, -s, -co)
        return self._taylor([cycle[k % 4] / math.factorial(k) for k in range(len(self._c))])

    def cos(self) -> "GrossValue":
        x = self._c[0]
        s, co = math.sin(x), math.cos(x)
        cycle = (co, -s, -co, s)
        return self._taylor([cycle[k % 4] / math.factorial(k) for k in range(len(self._c))])

    def exp(self) -> "GrossValue":
        e = math.exp(self._c[0])
        return self._taylor([e / math.factorial(k) for k in range(len(self._c))])

    def log(self) -> "GrossValue":
        x = self._c[0]
        if x <= 0.0:
            raise GrossDomainError(f"log of non-positive finite part {x}")
        coeffs = [math.log(x)]
        for k in range(1, len(self._c)):
            coeffs.append((-1) ** (k + 1) / (k * x**k))
        return self._taylor(coeffs)

    def sqrt(self) -> "GrossValue":
        if self._c[0] <= 0.0:
            raise GrossDomainError(f"sqrt of non-positive finite part {self._c[0]}")
        return self.power(0.5)

    def power(self, alpha: float) -> "GrossValue":
        """Real power; requires a positive finite part unless ``alpha`` is integral."""
        if float(alpha).is_integer():
            return self.powi(int(alpha))
        x = self._c[0]
        if x <= 0.0:
            raise GrossDomainError(f"non-integer power of non-positive finite part {x}")
        coeffs = []
        binom = 1.0
        for k in range(len(self._c)):
            coeffs.append(binom * x ** (alpha - k))
            binom *= (alpha - k) / (k + 1)
        return self._taylor(coeffs)

    def powi(self, n: int) -> "GrossValue":
        """Integer power, including negative exponents (needs nonzero finite part)."""
        x = self._c[0]
        if n < 0 and x == 0.0:
            raise GrossDomainError("negative power of a number with zero finite part")
        coeffs = []
        for k in range(len(self._c)):
            if n >= 0:
                coeffs.append(math.comb(n, k) * x ** (n - k) if k <= n else 0.0)
            else:
                # generalized binomial C(n, k) for negative n
                coeffs.append((-1) ** k * math.comb(-n + k - 1, k) * x ** (n - k))
        return self._taylor(coeffs)

    def reciprocal(self) -> "GrossValue":
        if self._c[0] == 0.0:
            raise ZeroDivisionError(
                "division by a number with zero finite part is not representable"
            )
        return self.powi(-1)


def _new(c: tuple) -> GrossValue:
    obj = _object_new(GrossValue)
    obj._c = c
    return obj


def _finite(x) -> float:
    return x.finite if isinstance(x, GrossValue) else x


class GrossVector:
    """Fixed-length vector of :class:`GrossValue` entries sharing one depth."""

    __slots__ = ("_e", "_depth")
    __array_ufunc__ = None

    def __init__(self, entries: Iterable, depth: int | None = None):
        items = list(entries)
        if depth is None:
            depths = {e.depth for e in items if isinstance(e, GrossValue)}
            if len(depths) > 1:
                raise DepthMismatchError(f"mixed depths {sorted(depths)}")
            depth = depths.pop() if depths else 0
        width = depth + 1
        out = []
        for e in items:
            if type(e) is GrossValue:
                if len(e._c) != width:
                    raise DepthMismatchError(f"entry of depth {e.depth} in depth-{depth} vector")
                out.append(e)
            else:
                out.append(GrossValue.lift(e, depth))
        self._e = tuple(out)
        self._depth = depth

    @classmethod
    def _make(cls, entries: tuple, depth: int) -> "GrossVector":
        obj = object.__new__(cls)
        obj._e = entries
        obj._depth = depth
        return obj

    @classmethod
    def lift(cls, y, depth: int) -> "GrossVector":
        return cls._make(tuple(GrossValue.lift(x, depth) for x in y), depth)

    @property
    def depth(self) -> int:
        return self._depth

    @property
    def entries(self) -> tuple:
        return self._e

    def __len__(self):
        return len(self._e)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return GrossVector._make(self._e[i], self._depth)
        return self._e[i]

    def __iter__(self):
        return iter(self._e)

    def _check(self, other: "GrossVector") -> None:
        if other._depth != self._depth:
            raise DepthMismatchError(f"depth {self._depth} combined with depth {other._depth}")
        if len(other._e) != len(self._e):
            raise ValueError(f"dimension {len(self._e)} combined with {len(other._e)}")

    def __add__(self, other):
        if isinstance(other, GrossVector):
            self._check(other)
            return GrossVector._make(tuple(map(_add, self._e, other._e)), self._depth)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, GrossVector):
            self._check(other)
            return GrossVector._make(tuple(map(_sub, self._e, other._e)), self._depth)
        return NotImplemented

    def __neg__(self):
        return GrossVector._make(tuple(-a for a in self._e), self._depth)

    def __mul__(self, scalar):
        if isinstance(scalar, (GrossValue,) + _REAL):
            return GrossVector._make(tuple(a * scalar for a in self._e), self._depth)
        return NotImplemented

    __rmul__ = __mul__

    def shift(self, n: int = 1) -> "GrossVector":
        return GrossVector._make(tuple(a.shift(n) for a in self._e), self._depth)

    def coeff_at(self, k: int) -> np.ndarray:
        if k < 0 or k > self._depth:
            raise IndexError(f"grosspower -{k} is beyond depth {self._depth}")
        return np.array([a._c[k] for a in self._e])

    @property
    def finite(self) -> np.ndarray:
        return self.coeff_at(0)

    def __repr__(self):
        return f"GrossVector(depth={self._depth}, {[list(a.coeffs) for a in self._e]})"


# ----------------------------------------------------------------------
# functional surface


def lift(x: float, depth: int) -> GrossValue:
    return GrossValue.lift(x, depth)


def add(a: GrossValue, b: GrossValue) -> GrossValue:
    return a + b


def mul(a: GrossValue, b: GrossValue) -> GrossValue:
    return a * b


def div(a: GrossValue, b: GrossValue) -> GrossValue:
    return a / b


def coeff_at(a, k: int) -> float:
    if isinstance(a, GrossValue):
        return a.coeff_at(k)
    if k != 0:
        raise IndexError(f"grosspower -{k} is beyond depth 0 of a real number")
    return float(a)


_ELEM: dict[str, Callable[[GrossValue], GrossValue]] = {
    "sin": GrossValue.sin,
    "cos": GrossValue.cos,
    "exp": GrossValue.exp,
    "log": GrossValue.log,
    "sqrt": GrossValue.sqrt,
}


def elem(fn: str, a: GrossValue, n: int | None = None) -> GrossValue:
    """Apply an elementary function by name; ``"powi"`` needs the exponent ``n``."""
    if fn == "powi":
        if n is None:
            raise ValueError("powi needs an integer exponent")
        return a.powi(n)
    try:
        return _ELEM[fn](a)
    except KeyError:
        raise ValueError(f"unknown elementary function {fn!r}") from None


# dispatching math for vector fields written once for both arithmetics


def sin(x):
    return x.sin() if isinstance(x, GrossValue) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, GrossValue) else np.cos(x)


def exp(x):
    return x.exp() if isinstance(x, GrossValue) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, GrossValue) else np.log(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, GrossValue) else np.sqrt(x)

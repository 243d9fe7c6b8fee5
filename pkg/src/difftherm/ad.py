"""Forward-mode automatic differentiation with dual scalars.

A :class:`Dual` carries a primal value and a fixed-width tangent vector.  Every
thermodynamic routine in this package is written against plain arithmetic and
the elementary functions below, so the same code runs on ``float`` (values
only) or on ``Dual`` (values plus exact first derivatives).

Branching (cubic root choice, phase selection) is resolved on primal values;
the derivative follows whichever branch was taken.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Dual",
    "DomainError",
    "NonFiniteError",
    "seed",
    "constant",
    "value",
    "values",
    "tangent",
    "jacobian",
    "exp",
    "log",
    "sqrt",
    "cbrt",
    "power",
    "fabs",
    "sin",
    "cos",
    "acos",
    "select",
    "minimum",
    "maximum",
]


class DomainError(ArithmeticError):
    """An elementary operation was evaluated outside its domain."""

    def __init__(self, op: str, primal, message: str | None = None):
        self.op = op
        self.primal = primal
        super().__init__(message or f"{op} undefined at primal value {primal!r}")


class NonFiniteError(DomainError):
    """An operation produced a NaN or infinite value or tangent."""


def _finite(v: float, t: np.ndarray) -> bool:
    if not math.isfinite(v):
        return False
    if math.isfinite(t.dot(t)):
        return True
    # the dot product can overflow even with finite entries
    return bool(np.isfinite(t).all())


class Dual:
    """Primal value plus tangent vector (derivative w.r.t. each seeded input).

    Instances are immutable.  Arithmetic with plain numbers lifts the number
    to a constant with zero tangents.  Comparisons act on primal values only.
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value: float, tangent, op: str = "construct"):
        v = float(value)
        t = np.array(tangent, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("tangent must be a non-empty 1-d vector")
        if not _finite(v, t):
            raise NonFiniteError(op, v, f"{op} produced a non-finite result (value={v!r})")
        _set_value(self, v)
        _set_tangent(self, t)

    def __setattr__(self, name, val):
        raise AttributeError("Dual is immutable")

    @property
    def width(self) -> int:
        return self.tangent.size

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.tangent.tolist()!r})"

    def __reduce__(self):
        return (Dual, (self.value, self.tangent.copy()))

    # -- helpers -----------------------------------------------------------
    def _coerce(self, other, op: str):
        if isinstance(other, Dual):
            if other.tangent.size != self.tangent.size:
                raise ValueError(
                    f"{op}: tangent widths differ ({self.tangent.size} vs {other.tangent.size})"
                )
            return other.value, other.tangent
        if isinstance(other, (int, float, np.floating, np.integer)):
            return float(other), None
        return NotImplemented, None

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        ov, ot = self._coerce(other, "add")
        if ov is NotImplemented:
            return NotImplemented
        t = self.tangent if ot is None else self.tangent + ot
        return _make(self.value + ov, t, "add")

    __radd__ = __add__

    def __sub__(self, other):
        ov, ot = self._coerce(other, "sub")
        if ov is NotImplemented:
            return NotImplemented
        t = self.tangent if ot is None else self.tangent - ot
        return _make(self.value - ov, t, "sub")

    def __rsub__(self, other):
        ov, _ = self._coerce(other, "sub")
        if ov is NotImplemented:
            return NotImplemented
        return _make(ov - self.value, -self.tangent, "sub")

    def __mul__(self, other):
        ov, ot = self._coerce(other, "mul")
        if ov is NotImplemented:
            return NotImplemented
        if ot is None:
            return _make(self.value * ov, self.tangent * ov, "mul")
        return _make(self.value * ov, self.tangent * ov + ot * self.value, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        ov, ot = self._coerce(other, "div")
        if ov is NotImplemented:
            return NotImplemented
        if ov == 0.0:
            raise DomainError("div", ov, "division by a zero primal value")
        q = self.value / ov
        if ot is None:
            return _make(q, self.tangent / ov, "div")
        return _make(q, (self.tangent - ot * q) / ov, "div")

    def __rtruediv__(self, other):
        ov, _ = self._coerce(other, "div")
        if ov is NotImplemented:
            return NotImplemented
        if self.value == 0.0:
            raise DomainError("div", self.value, "division by a zero primal value")
        q = ov / self.value
        return _make(q, -self.tangent * (q / self.value), "div")

    def __neg__(self):
        return _make(-self.value, -self.tangent, "neg")

    def __pos__(self):
        return self

    def __abs__(self):
        return fabs(self)

    def __pow__(self, k):
        if isinstance(k, Dual):
            return exp(k * log(self))
        return power(self, k)

    def __rpow__(self, base):
        if base <= 0:
            raise DomainError("pow", base, "non-positive base with a dual exponent")
        return exp(self * math.log(base))

    # -- primal comparisons --------------------------------------------------
    def __lt__(self, other):
        return self.value < value(other)

    def __le__(self, other):
        return self.value <= value(other)

    def __gt__(self, other):
        return self.value > value(other)

    def __ge__(self, other):
        return self.value >= value(other)


_set_value = Dual.value.__set__
_set_tangent = Dual.tangent.__set__
_new = object.__new__


def _make(v: float, t: np.ndarray, op: str) -> Dual:
    # internal constructor: trusted shapes, finiteness still enforced
    if not _finite(v, t):
        raise NonFiniteError(op, v, f"{op} produced a non-finite result (value={v!r})")
    d = _new(Dual)
    _set_value(d, v)
    _set_tangent(d, t)
    return d


def seed(values: Sequence[float]) -> list[Dual]:
    """Lift ``values`` to duals seeded along the standard basis."""
    n = len(values)
    if n == 0:
        raise ValueError("seed needs at least one value")
    eye = np.eye(n)
    return [Dual(v, eye[i], "seed") for i, v in enumerate(values)]


def constant(v: float, width: int) -> Dual:
    return Dual(v, np.zeros(width), "constant")


def value(x) -> float:
    return x.value if isinstance(x, Dual) else float(x)


def values(xs: Iterable) -> np.ndarray:
    return np.array([value(x) for x in xs], dtype=float)


def tangent(x, width: int) -> np.ndarray:
    if isinstance(x, Dual):
        return np.array(x.tangent)
    return np.zeros(width)


def jacobian(xs: Sequence, width: int) -> np.ndarray:
    """Stack tangents of ``xs`` into a ``len(xs) x width`` matrix."""
    return np.array([tangent(x, width) for x in xs]).reshape(len(xs), width)


def _chain(x: Dual, v: float, dv: float, op: str) -> Dual:
    if not math.isfinite(dv):
        raise NonFiniteError(op, x.value, f"{op}: derivative not finite at {x.value!r}")
    return _make(v, x.tangent * dv, op)


def _real(x, op: str) -> float:
    try:
        v = float(x)
    except TypeError:
        raise TypeError(f"{op}: unsupported operand type {type(x).__name__}") from None
    return v


# -- elementary functions ----------------------------------------------------
def exp(x):
    if isinstance(x, Dual):
        try:
            v = math.exp(x.value)
        except OverflowError:
            raise NonFiniteError("exp", x.value) from None
        return _chain(x, v, v, "exp")
    try:
        return math.exp(_real(x, "exp"))
    except OverflowError:
        raise NonFiniteError("exp", x) from None


def log(x):
    xv = value(x)
    if not xv > 0.0:
        raise DomainError("log", xv)
    if isinstance(x, Dual):
        return _chain(x, math.log(xv), 1.0 / xv, "log")
    return math.log(xv)


def sqrt(x):
    xv = value(x)
    if isinstance(x, Dual):
        # derivative is unbounded at 0
        if not xv > 0.0:
            raise DomainError("sqrt", xv)
        r = math.sqrt(xv)
        return _chain(x, r, 0.5 / r, "sqrt")
    if xv < 0.0:
        raise DomainError("sqrt", xv)
    return math.sqrt(xv)


def cbrt(x):
    """Real cube root, defined for negative arguments."""
    xv = value(x)
    r = math.copysign(abs(xv) ** (1.0 / 3.0), xv)
    if isinstance(x, Dual):
        if xv == 0.0:
            raise DomainError("cbrt", xv)
        return _chain(x, r, 1.0 / (3.0 * r * r), "cbrt")
    return r


def power(x, k: float):
    """``x**k`` for a constant exponent ``k``."""
    k = float(k)
    xv = value(x)
    if xv < 0.0 and not k.is_integer():
        raise DomainError("pow", xv, f"pow: negative base {xv!r} with non-integer exponent {k!r}")
    if xv == 0.0 and k < 1.0 and k != 0.0 and isinstance(x, Dual):
        raise DomainError("pow", xv)
    try:
        v = xv**k
    except (OverflowError, ZeroDivisionError):
        raise DomainError("pow", xv) from None
    if isinstance(x, Dual):
        if k == 0.0:
            return _make(1.0, x.tangent * 0.0, "pow")
        dv = k * xv ** (k - 1.0)
        return _chain(x, v, dv, "pow")
    return v


def fabs(x):
    xv = value(x)
    if isinstance(x, Dual):
        return _make(abs(xv), x.tangent * math.copysign(1.0, xv) if xv != 0.0 else x.tangent * 0.0, "abs")
    return abs(xv)


def sin(x):
    if isinstance(x, Dual):
        return _chain(x, math.sin(x.value), math.cos(x.value), "sin")
    return math.sin(_real(x, "sin"))


def cos(x):
    if isinstance(x, Dual):
        return _chain(x, math.cos(x.value), -math.sin(x.value), "cos")
    return math.cos(_real(x, "cos"))


def acos(x):
    xv = value(x)
    if isinstance(x, Dual):
        if not -1.0 < xv < 1.0:
            raise DomainError("acos", xv)
        return _chain(x, math.acos(xv), -1.0 / math.sqrt(1.0 - xv * xv), "acos")
    if not -1.0 <= xv <= 1.0:
        raise DomainError("acos", xv)
    return math.acos(xv)


# -- branch selection ---------------------------------------------------------
def select(cond: bool, a, b):
    """``a`` if ``cond`` else ``b``; the tangent of the chosen branch is kept."""
    return a if cond else b


def minimum(a, b):
    """Smaller primal wins; ties return ``a``."""
    return select(value(b) < value(a), b, a)


def maximum(a, b):
    """Larger primal wins; ties return ``a``."""
    return select(value(b) > value(a), b, a)

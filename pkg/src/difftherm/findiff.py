"""Finite-difference baseline: one-step quotients, step sweeps, Richardson oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence


class FdEvaluationError(RuntimeError):
    """The function failed at a perturbed point."""

    def __init__(self, point: float, cause: BaseException):
        self.point = point
        self.cause = cause
        super().__init__(f"evaluation failed at x = {point!r}: {cause}")


class OracleUnreliable(RuntimeError):
    """Richardson extrapolation did not settle; the point should be skipped."""


@dataclass(frozen=True)
class FdScheme:
    kind: str = "central"
    step: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("forward", "central"):
            raise ValueError(f"scheme must be 'forward' or 'central', got {self.kind!r}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive and finite, got {self.step!r}")


def _call(f, x):
    try:
        return f(x)
    except Exception as exc:  # any failure inside f is reported with its point
        raise FdEvaluationError(x, exc) from exc


def fd_derivative(f: Callable, x: float, scheme: FdScheme):
    """Forward ``(f(x+h) - f(x))/h`` or central ``(f(x+h) - f(x-h))/(2h)``.

    ``f`` may return a scalar or a numpy array; the quotient is taken
    elementwise.
    """
    h = scheme.step
    if scheme.kind == "forward":
        return (_call(f, x + h) - _call(f, x)) / h
    return (_call(f, x + h) - _call(f, x - h)) / (2.0 * h)


class SweepRow(NamedTuple):
    step: float
    derivative: float
    deviation: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def step_sweep(
    f: Callable, x: float, steps: Sequence[float], reference: float, kind: str = "central"
) -> list[SweepRow]:
    """FD derivative at each step and its absolute deviation from ``reference``.

    Rows keep the order of ``steps``.  A failing evaluation yields a row with
    NaN values and the error message instead of aborting the sweep.
    """
    rows = []
    for h in steps:
        try:
            d = float(fd_derivative(f, x, FdScheme(kind, h)))
            rows.append(SweepRow(h, d, abs(d - reference)))
        except (FdEvaluationError, ArithmeticError) as exc:
            rows.append(SweepRow(h, math.nan, math.nan, str(exc)))
    return rows


def richardson_reference(
    f: Callable, x: float, h0: float = 0.1, levels: int = 8, tol: float = 1e-12
) -> tuple[float, float]:
    """Derivative of ``f`` at ``x`` by Richardson extrapolation of central differences.

    Steps halve at each level and every column of the tableau cancels the
    next even power of h.  Returns ``(estimate, error_estimate)`` where the
    error is the change between the two best diagonal entries.  Raises
    :class:`OracleUnreliable` when that change starts growing before it falls
    below ``tol`` relative.

    Test oracle only; comparisons between AD and FD never go through here.
    """
    table: list[list[float]] = []
    best, best_err = math.nan, math.inf
    h = h0
    for i in range(levels):
        row = [float(fd_derivative(f, x, FdScheme("central", h)))]
        fac = 1.0
        for j in range(1, i + 1):
            fac *= 4.0
            row.append(row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (fac - 1.0))
        if i:
            err = max(abs(row[i] - row[i - 1]), abs(row[i] - table[i - 1][i - 1]))
            if err < best_err:
                best, best_err = row[i], err
            elif err > 2.0 * best_err:
                break
            if best_err <= tol * max(1.0, abs(best)):
                return best, best_err
        table.append(row)
        h *= 0.5
    if not math.isfinite(best) or best_err > 1e3 * tol * max(1.0, abs(best)):
        raise OracleUnreliable(f"extrapolation at x = {x!r} stalled with error {best_err:.3g}")
    return best, best_err

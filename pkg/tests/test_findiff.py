import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from difftherm.findiff import (
    FdEvaluationError,
    FdScheme,
    OracleUnreliable,
    fd_derivative,
    richardson_reference,
    step_sweep,
)
from conftest import P18


def test_identity_is_exact():
    for kind in ("forward", "central"):
        assert fd_derivative(lambda x: x, 3.0, FdScheme(kind, 0.5)) == 1.0


def test_square():
    sq = lambda x: x * x  # noqa: E731
    assert fd_derivative(sq, 1.0, FdScheme("central", 0.1)) == pytest.approx(2.0, abs=1e-14)
    assert fd_derivative(sq, 1.0, FdScheme("forward", 0.1)) == pytest.approx(2.1, abs=1e-14)


def test_array_valued():
    d = fd_derivative(lambda x: np.array([x, x * x]), 2.0, FdScheme("central", 1e-3))
    np.testing.assert_allclose(d, [1.0, 4.0])


@pytest.mark.parametrize("kind,order", [("forward", 1), ("central", 2)])
def test_truncation_order(kind, order):
    hs = np.logspace(-1, -3, 9)
    err = [abs(fd_derivative(math.exp, 0.3, FdScheme(kind, h)) - math.exp(0.3)) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(err), 1)[0]
    assert slope == pytest.approx(order, abs=0.1)


def test_scheme_validation():
    for bad in (dict(kind="backward"), dict(step=0.0), dict(step=-1e-3), dict(step=math.inf)):
        with pytest.raises(ValueError):
            FdScheme(**bad)


def test_failure_carries_point():
    def f(x):
        if x > 1.0:
            raise ZeroDivisionError("boom")
        return x

    with pytest.raises(FdEvaluationError) as ei:
        fd_derivative(f, 1.0, FdScheme("central", 0.5))
    assert ei.value.point == 1.5


@given(st.floats(-5, 5), st.floats(-5, 5), st.lists(st.floats(1e-6, 1.0), max_size=6))
def test_linear_sweep_is_flat(a, b, steps):
    rows = step_sweep(lambda x: a * x + b, 0.7, steps, a)
    assert [r.step for r in rows] == steps
    assert all(r.ok and r.deviation <= 1e-8 * (1 + abs(a) + abs(b)) / min(r.step, 1) for r in rows)


def test_empty_sweep():
    assert step_sweep(math.sin, 0.0, [], 1.0) == []


def test_sweep_records_failures():
    rows = step_sweep(math.log, 0.5, [1.0, 0.1], 2.0)
    assert not rows[0].ok and math.isnan(rows[0].deviation) and "0.5" in rows[0].error
    assert rows[1].ok


def test_richardson_exp():
    est, err = richardson_reference(math.exp, 0.0)
    assert est == pytest.approx(1.0, abs=1e-12) and err < 1e-10


def test_richardson_cubic():
    est, _ = richardson_reference(lambda x: x**3, 2.0)
    assert est == pytest.approx(12.0, rel=1e-12)


def test_richardson_rejects_noise():
    with pytest.raises(OracleUnreliable):
        richardson_reference(lambda x: x + 1e-4 * math.sin(1e7 * x), 0.3)


def test_small_step_blowup_on_k(eos):
    x = np.array([0.1, 0.2, 0.3, 0.4])
    y = np.array([0.6, 0.2, 0.15, 0.05])
    ref = eos.k_derivatives(250.0, P18, x, y, "T")
    for i in range(eos.n):
        f = lambda t, i=i: eos.k_values(t, P18, x, y)[i]  # noqa: E731
        rows = step_sweep(f, 250.0, [1e-3, 1e-4, 1e-8], float(ref[i]))
        best = min(r.deviation for r in rows[:2])
        assert rows[2].deviation >= 10 * best

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from difftherm import ad
from difftherm.findiff import richardson_reference
from difftherm.flash import (
    AD,
    DerivativeMode,
    FlashError,
    FlashSpec,
    InfeasibleVaporFractionError,
    NoSolutionError,
    SolverOptions,
    feed_enthalpy,
    flash,
    flash_ph,
    flash_pt,
    flash_pv,
    phase_split,
    rachford_rice_residual,
    rr_sum_difference,
    solve_rachford_rice,
    stream_enthalpy,
    stream_enthalpy_slope,
)
from conftest import EQUIMOLAR, P18
from oracles import bisect, ph_temperature, pt_flash, pv_temperature, rr, rr_root

FD3 = DerivativeMode("fd", 1e-3)


def check_invariants(res, z, tol=1e-9):
    z = np.asarray(z)
    assert abs(res.x.sum() - 1) < tol and abs(res.y.sum() - 1) < tol
    assert np.max(np.abs(z - (1 - res.V) * res.x - res.V * res.y)) < tol
    if res.phase == "two-phase":
        np.testing.assert_allclose(res.K, res.y / res.x, rtol=tol)
    assert res.residual_trace


class TestPhaseSplit:
    def test_unit_k(self):
        for V in (0.0, 0.3, 1.0):
            x, y = phase_split([0.2, 0.8], [1.0, 1.0], V)
            np.testing.assert_array_equal(x, [0.2, 0.8])
            np.testing.assert_array_equal(y, [0.2, 0.8])

    def test_v0(self):
        x, y = phase_split([0.3, 0.7], [2.0, 0.5], 0.0)
        np.testing.assert_array_equal(x, [0.3, 0.7])
        np.testing.assert_array_equal(y, [0.6, 0.35])

    def test_v1(self):
        x, y = phase_split([0.3, 0.7], [2.0, 0.5], 1.0)
        np.testing.assert_allclose(x, [0.15, 1.4])
        np.testing.assert_allclose(y, [0.3, 0.7])

    def test_y_is_k_times_x(self):
        K = [3.0, 0.2, 1.1]
        x, y = phase_split([0.2, 0.5, 0.3], K, 0.37)
        np.testing.assert_array_equal(y, np.asarray(K) * x)

    def test_infeasible(self):
        with pytest.raises(InfeasibleVaporFractionError) as ei:
            phase_split([0.5, 0.5], [0.1, 4.0], 1.5)
        assert ei.value.index == 0


class TestRachfordRice:
    def test_symmetric_pair(self):
        assert rachford_rice_residual([0.5, 0.5], [2.0, 0.5], 0.5) == 0.0

    def test_unit_k(self):
        for V in np.linspace(0, 1, 7):
            assert rachford_rice_residual(EQUIMOLAR, [1.0] * 4, V) == 0.0

    def test_bisection_oracle(self):
        z, K = (0.4, 0.6), (3.0, 0.4)
        ref = rr_root(z, K)
        V, phase, _, _ = solve_rachford_rice(z, K)
        assert phase == "two-phase"
        assert V == pytest.approx(ref, abs=1e-12)
        assert abs(rachford_rice_residual(z, K, V)) < 1e-12

    @given(
        st.lists(st.floats(0.05, 1.0), min_size=3, max_size=5).flatmap(
            lambda w: st.tuples(st.just(w), st.lists(st.floats(0.05, 20.0), min_size=len(w), max_size=len(w)))
        ),
        st.floats(0.0, 1.0),
    )
    def test_equals_sum_difference(self, wk, V):
        w, K = wk
        z = np.array(w) / sum(w)
        assert rachford_rice_residual(z, K, V) == pytest.approx(rr_sum_difference(z, K, V), abs=1e-12)

    @given(st.lists(st.floats(0.05, 20.0), min_size=4, max_size=4).filter(lambda k: max(abs(v - 1) for v in k) > 1e-3))
    def test_strictly_decreasing(self, K):
        lo = max([-1 / (k - 1) for k in K if k > 1] + [-1e3])
        hi = min([1 / (1 - k) for k in K if k < 1] + [1e3])
        for V in np.linspace(lo, hi, 22)[1:-1]:
            F = rachford_rice_residual(EQUIMOLAR, K, ad.Dual(V, [1.0]))
            assert F.tangent[0] < 0

    def test_single_phase_clamps(self):
        assert solve_rachford_rice([0.5, 0.5], [0.5, 0.9])[:2] == (0.0, "liquid")
        assert solve_rachford_rice([0.5, 0.5], [2.0, 1.5])[:2] == (1.0, "vapor")


class TestPT:
    def test_matches_numpy_oracle(self, eos, np_eos):
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0))
        V, x, y = pt_flash(np_eos, 250.0, P18, EQUIMOLAR)
        assert res.converged and res.phase == "two-phase"
        assert res.V == pytest.approx(V, abs=1e-9)
        np.testing.assert_allclose(res.x, x, atol=1e-9)
        check_invariants(res, EQUIMOLAR)
        assert abs(rachford_rice_residual(EQUIMOLAR, res.K, res.V)) < 1e-10

    def test_cold_feed(self, eos, np_eos):
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=180.0))
        V, _, _ = pt_flash(np_eos, 180.0, P18, EQUIMOLAR)
        assert res.converged and res.V == pytest.approx(V, abs=1e-9)
        assert res.V < 0.05

    def test_vapor_fraction_grows_with_T(self, eos):
        v = [flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=T)).V for T in (220.0, 240.0, 260.0)]
        assert v[0] < v[1] < v[2]

    def test_fixed_k(self, eos):
        K = (2.0, 0.5, 1.5, 0.8)
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0), fixed_k=K)
        assert res.V == pytest.approx(rr_root(EQUIMOLAR, K), abs=1e-9)
        np.testing.assert_array_equal(res.K, K)

    def test_hot_feed_single_vapor(self, eos):
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=320.0))
        assert res.converged and res.phase == "vapor" and res.V == 1.0
        check_invariants(res, EQUIMOLAR)

    def test_iteration_cap_flags(self, eos):
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0), SolverOptions(max_outer=2))
        assert not res.converged and "not converged" in res.message
        assert len(res.residual_trace) == 2

    def test_fd_mode_same_answer(self, eos):
        a = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0))
        b = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0, mode=FD3))
        assert a.V == pytest.approx(b.V, abs=1e-10)

    def test_result_serializes(self, eos):
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0))
        doc = json.loads(json.dumps(res.to_dict()))
        assert doc["V"] == res.V and len(doc["residual_trace"]) == len(res.residual_trace)


class TestPV:
    @pytest.mark.parametrize("V", [0.1, 0.5, 0.7, 0.9])
    def test_matches_bisection(self, eos, np_eos, V):
        res = flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=V))
        assert res.converged
        check_invariants(res, EQUIMOLAR)
        x, y = res.x / res.x.sum(), res.y / res.y.sum()
        T = pv_temperature(np_eos, P18, EQUIMOLAR, V, x, y, res.T - 2, res.T + 2)
        assert res.T == pytest.approx(T, abs=1e-4)

    def test_dew_point(self, eos, np_eos):
        res = flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=1.0))
        assert res.converged
        np.testing.assert_allclose(res.y, EQUIMOLAR, atol=1e-12)
        x = res.x / res.x.sum()

        def F(T):
            K = np.exp(np_eos.ln_k(T, P18, x, np.array(EQUIMOLAR)))
            return float(np.sum(np.asarray(EQUIMOLAR) * (K - 1) / K))

        assert res.T == pytest.approx(bisect(F, res.T - 2, res.T + 2, 1e-10), abs=1e-4)

    def test_ad_and_fd_agree(self, eos):
        a = flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=0.7))
        b = flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=0.7, mode=FD3))
        assert a.converged and b.converged
        assert a.T == pytest.approx(b.T, abs=1e-6)
        np.testing.assert_allclose(a.x, b.x, atol=1e-6)

    def test_trace_ends_below_tolerance(self, eos):
        res = flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=0.4))
        assert abs(res.residual_trace[-1][1]) < SolverOptions().pv_tol

    def test_no_bracket(self, eos):
        with pytest.raises(NoSolutionError):
            flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=0.5), SolverOptions(t_lo=150.0, t_hi=170.0))

    def test_iteration_cap_flags(self, eos):
        res = flash_pv(eos, FlashSpec("PV", EQUIMOLAR, P18, V=0.5), SolverOptions(max_outer=1))
        assert not res.converged and res.residual_trace


class TestPH:
    def test_fixed_point(self, eos):
        H = feed_enthalpy(eos, 250.0, P18, EQUIMOLAR)
        res = flash_ph(eos, FlashSpec("PH", EQUIMOLAR, P18, H=H))
        assert res.converged
        assert res.T == pytest.approx(250.0, abs=1e-4)
        assert abs(res.H_total - res.H_out) < 1e-6 * max(1, abs(res.H_total))

    def test_duty_raises_vapor_fraction(self, eos):
        H = feed_enthalpy(eos, 230.0, P18, EQUIMOLAR)
        v = [flash_ph(eos, FlashSpec("PH", EQUIMOLAR, P18, H=H, Q=Q)).V for Q in (0.0, 1000.0, 2000.0, 4000.0)]
        assert all(np.diff(v) > 0)

    @pytest.mark.parametrize("Q", [-2000.0, 1500.0, 6000.0])
    def test_matches_bisection(self, eos, np_eos, Q):
        H = feed_enthalpy(eos, 250.0, P18, EQUIMOLAR)
        res = flash_ph(eos, FlashSpec("PH", EQUIMOLAR, P18, H=H, Q=Q))
        assert res.converged
        check_invariants(res, EQUIMOLAR)
        T = ph_temperature(np_eos, P18, EQUIMOLAR, H + Q, res.T - 1, res.T + 1)
        assert res.T == pytest.approx(T, abs=1e-4)

    def test_implicit_slope(self, eos):
        res = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=245.0))
        slope = stream_enthalpy_slope(eos, res, list(EQUIMOLAR))

        def H(T):
            r = flash_pt(eos, FlashSpec("PT", EQUIMOLAR, P18, T=T), SolverOptions(k_tol=1e-13), k_init=res.K)
            return stream_enthalpy(eos, r)

        ref, _ = richardson_reference(H, 245.0, h0=0.2, tol=1e-9)
        assert slope == pytest.approx(ref, rel=1e-6)

    def test_fd_mode(self, eos):
        H = feed_enthalpy(eos, 250.0, P18, EQUIMOLAR)
        res = flash_ph(eos, FlashSpec("PH", EQUIMOLAR, P18, H=H, Q=1000.0, mode=FD3))
        assert res.converged and res.mode == "fd:0.001"

    def test_out_of_range(self, eos):
        with pytest.raises(NoSolutionError):
            flash_ph(eos, FlashSpec("PH", EQUIMOLAR, P18, H=1e7))

    def test_inner_failure_has_context(self, eos):
        with pytest.raises(FlashError, match="PH flash.*inner PT"):
            flash_ph(eos, FlashSpec("PH", EQUIMOLAR, P18, H=-8000.0), SolverOptions(max_outer=1))


class TestSpec:
    def test_exact_fields(self):
        with pytest.raises(ValueError):
            FlashSpec("PT", EQUIMOLAR, P18)
        with pytest.raises(ValueError):
            FlashSpec("PT", EQUIMOLAR, P18, T=250.0, V=0.5)
        with pytest.raises(ValueError):
            FlashSpec("PV", EQUIMOLAR, P18, V=1.5)
        with pytest.raises(ValueError):
            FlashSpec("PT", EQUIMOLAR, P18, T=250.0, Q=10.0)
        with pytest.raises(ValueError):
            FlashSpec("XY", EQUIMOLAR, P18, T=250.0)

    def test_h_total(self):
        assert FlashSpec("PH", EQUIMOLAR, P18, H=-100.0, Q=40.0).H_total == -60.0

    def test_mode_parse(self):
        assert DerivativeMode.parse("ad") == AD
        assert DerivativeMode.parse("fd:1e-6") == DerivativeMode("fd", 1e-6)
        assert str(DerivativeMode("fd", 1e-6)) == "fd:1e-06"
        for bad in ("fd", "fd:-1", "xx"):
            with pytest.raises(ValueError):
                DerivativeMode.parse(bad)

    def test_dispatch(self, eos):
        assert flash(eos, FlashSpec("PT", EQUIMOLAR, P18, T=250.0)).kind == "PT"


@given(st.lists(st.floats(0.02, 1.0), min_size=4, max_size=4), st.floats(190.0, 300.0), st.floats(8e5, 30e5))
def test_pt_conservation(eos, w, T, P):
    z = tuple(np.array(w) / math.fsum(w))
    z = tuple(np.array(z) / math.fsum(z))
    res = flash_pt(eos, FlashSpec("PT", z, P, T=T))
    if res.converged:
        check_invariants(res, z)
        if res.phase == "two-phase":
            assert abs(rachford_rice_residual(z, res.K, res.V)) < 1e-10

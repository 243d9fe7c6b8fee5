"""PT, PV and PH flash solvers on top of :class:`~difftherm.srk.SRK`.

Newton derivatives come from forward-mode AD by default.  A central finite
difference with an explicit step can be selected instead, which is how the
two approaches are compared.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import ad
from .srk import LIQUID, SRK, VAPOR, check_composition, wilson_k


class FlashError(RuntimeError):
    """A flash could not be set up or its inner solve failed."""


class InfeasibleVaporFractionError(ValueError):
    def __init__(self, index: int, V: float):
        self.index = index
        self.V = V
        super().__init__(f"(K_{index} - 1) V + 1 <= 0 at V = {V!r}")


class NoSolutionError(FlashError):
    pass


@dataclass(frozen=True)
class DerivativeMode:
    kind: str = "ad"
    step: float | None = None

    def __post_init__(self):
        if self.kind not in ("ad", "fd"):
            raise ValueError(f"derivative mode must be 'ad' or 'fd', got {self.kind!r}")
        if self.kind == "fd":
            if self.step is None or not (math.isfinite(self.step) and self.step > 0):
                raise ValueError(f"fd step must be positive and finite, got {self.step!r}")
        elif self.step is not None:
            raise ValueError("ad mode takes no step")

    @classmethod
    def parse(cls, text: str) -> "DerivativeMode":
        """``"ad"`` or ``"fd:<step>"``."""
        text = text.strip().lower()
        if text == "ad":
            return cls("ad")
        if text.startswith("fd:"):
            return cls("fd", float(text[3:]))
        raise ValueError(f"cannot parse derivative mode {text!r}")

    def __str__(self) -> str:
        return "ad" if self.kind == "ad" else f"fd:{self.step:g}"


AD = DerivativeMode("ad")


@dataclass
class SolverOptions:
    rr_tol: float = 1e-10
    k_tol: float = 1e-10
    pv_tol: float = 1e-10
    ph_rtol: float = 1e-6
    comp_tol: float = 1e-10
    max_outer: int = 100
    max_inner: int = 200
    t_lo: float = 150.0
    t_hi: float = 400.0
    min_slope: float = 1e-14
    scan_step: float = 10.0


@dataclass(frozen=True)
class FlashSpec:
    kind: str
    z: tuple
    P: float
    T: float | None = None
    V: float | None = None
    H: float | None = None
    Q: float = 0.0
    mode: DerivativeMode = AD
    T_guess: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))
        check_composition(self.z, tol=1e-9)
        if not self.P > 0:
            raise ValueError("P must be positive")
        given = {f for f in ("T", "V", "H") if getattr(self, f) is not None}
        need = {"PT": {"T"}, "PV": {"V"}, "PH": {"H"}}.get(kind)
        if need is None:
            raise ValueError(f"flash kind must be PT, PV or PH, got {self.kind!r}")
        if given != need:
            raise ValueError(f"{kind} flash needs exactly {sorted(need)}, got {sorted(given)}")
        if kind != "PH" and self.Q != 0.0:
            raise ValueError("duty Q only applies to PH flash")
        if kind == "PV" and not 0.0 <= self.V <= 1.0:
            raise ValueError(f"V must lie in [0, 1], got {self.V}")

    @property
    def H_total(self) -> float:
        return self.H + self.Q


@dataclass
class FlashResult:
    kind: str
    converged: bool
    T: float
    P: float
    V: float
    x: np.ndarray
    y: np.ndarray
    K: np.ndarray
    phase: str = "two-phase"  # or "liquid" / "vapor" for a single phase
    inner_iters: int = 0
    outer_iters: int = 0
    residual_trace: list = field(default_factory=list)
    mode: str = "ad"
    message: str = ""
    H_total: float | None = None
    H_out: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("x", "y", "K"):
            d[k] = [float(v) for v in d[k]]
        d["residual_trace"] = [[float(a), float(b)] for a, b in self.residual_trace]
        return d


# -- phase generation and Rachford-Rice ---------------------------------------
def _split(z, K, V):
    x, y = [], []
    for i, (zi, ki) in enumerate(zip(z, K)):
        den = (ki - 1.0) * V + 1.0
        if not ad.value(den) > 0.0:
            raise InfeasibleVaporFractionError(i, ad.value(V))
        xi = zi / den
        x.append(xi)
        y.append(ki * xi)
    return x, y


def phase_split(z: Sequence, K: Sequence, V):
    """Liquid and vapor compositions for vapor fraction ``V`` at fixed K."""
    x, y = _split(z, K, V)
    if any(isinstance(v, ad.Dual) for v in x + y):
        return x, y
    return np.array(x), np.array(y)


def rachford_rice_residual(z: Sequence, K: Sequence, V):
    """F(V) = sum_i z_i (K_i - 1) / ((K_i - 1) V + 1)."""
    total = 0.0
    for i, (zi, ki) in enumerate(zip(z, K)):
        den = (ki - 1.0) * V + 1.0
        if not ad.value(den) > 0.0:
            raise InfeasibleVaporFractionError(i, ad.value(V))
        total = total + zi * (ki - 1.0) / den
    return total


def rr_sum_difference(z: Sequence, K: Sequence, V):
    """sum_i (y_i - x_i) from :func:`phase_split`; equal to the residual above."""
    x, y = _split(z, K, V)
    return sum(yi - xi for xi, yi in zip(x, y))


def _normalize(v):
    s = sum(v)
    return [vi / s for vi in v]


def solve_rachford_rice(z, K, opts: SolverOptions | None = None, mode: DerivativeMode = AD):
    """Vapor fraction in [0, 1] for fixed K.

    Returns ``(V, phase, iterations, trace)``.  When F(0) <= 0 the feed is
    below its bubble point (``V = 0``, liquid); when F(1) >= 0 it is above its
    dew point (``V = 1``, vapor).  Otherwise Newton runs inside the bracket
    [0, 1] and falls back to bisection when a step leaves it.
    """
    opts = opts or SolverOptions()
    z = [float(v) for v in z]
    K = [float(v) for v in K]
    f0 = rachford_rice_residual(z, K, 0.0)
    if f0 <= 0.0:
        return 0.0, "liquid", 0, [(0.0, f0)]
    f1 = rachford_rice_residual(z, K, 1.0)
    if f1 >= 0.0:
        return 1.0, "vapor", 0, [(1.0, f1)]

    lo, hi = 0.0, 1.0
    V = f0 / (f0 - f1)
    trace = []
    for it in range(1, opts.max_inner + 1):
        F, dF = _rr_with_slope(z, K, V, mode)
        trace.append((V, F))
        if F > 0.0:
            lo = V
        else:
            hi = V
        step = F / dF if dF < -opts.min_slope else math.nan
        if abs(F) < opts.rr_tol and (abs(step) < 1e-12 or hi - lo < 1e-15):
            return V, "two-phase", it, trace
        Vn = V - step
        if not lo < Vn < hi:
            Vn = 0.5 * (lo + hi)
        V = Vn
    raise NoSolutionError(f"Rachford-Rice did not converge in {opts.max_inner} iterations")


def _rr_with_slope(z, K, V, mode):
    if mode.kind == "ad":
        F = rachford_rice_residual(z, K, ad.Dual(V, [1.0]))
        return F.value, float(F.tangent[0])
    h = mode.step
    F = rachford_rice_residual(z, K, V)
    lo, hi = max(V - h, 0.0), min(V + h, 1.0)
    return F, (rachford_rice_residual(z, K, hi) - rachford_rice_residual(z, K, lo)) / (hi - lo)


# -- PT flash -----------------------------------------------------------------
def _single_phase_label(eos: SRK, T, P, z) -> str:
    zc = eos.compressibility(T, P, list(z), VAPOR)
    return "vapor" if zc > 1.0 / 3.0 else "liquid"


def flash_pt(
    eos: SRK,
    spec: FlashSpec,
    opts: SolverOptions | None = None,
    fixed_k: Sequence[float] | None = None,
    k_init: Sequence[float] | None = None,
) -> FlashResult:
    """Isothermal flash: successive substitution on K, Newton on V inside.

    ``fixed_k`` freezes K (no EOS update) and reduces the problem to one
    Rachford-Rice solve.  ``k_init`` overrides the Wilson starting estimate.
    """
    if spec.kind != "PT":
        raise ValueError("flash_pt needs a PT spec")
    opts = opts or SolverOptions()
    z = list(spec.z)
    T, P = float(spec.T), float(spec.P)
    if fixed_k is not None:
        K = [float(v) for v in fixed_k]
    elif k_init is not None:
        K = [float(v) for v in k_init]
    else:
        K = wilson_k(eos.components, T, P)
    lnK = [math.log(k) for k in K]

    inner = 0
    trace = []
    converged = False
    for outer in range(1, opts.max_outer + 1):
        V, phase, n, _ = solve_rachford_rice(z, K, opts, spec.mode)
        inner += n
        if fixed_k is not None:
            trace.append((V, abs(rachford_rice_residual(z, K, V))))
            converged = True
            break
        x, y = _split(z, K, V)
        new = eos.ln_k_values(T, P, _normalize(x), _normalize(y))
        delta = max(abs(a - b) for a, b in zip(new, lnK))
        trace.append((V, delta))
        lnK = new
        K = [math.exp(v) for v in lnK]
        if max(abs(v) for v in lnK) < 1e-8:
            # trivial solution: both phases collapsed onto the feed
            phase = _single_phase_label(eos, T, P, z)
            V = 1.0 if phase == "vapor" else 0.0
            return FlashResult(
                "PT", True, T, P, V, np.array(z), np.array(z), np.ones(len(z)),
                phase=phase, inner_iters=inner, outer_iters=outer, residual_trace=trace,
                mode=str(spec.mode), message="trivial solution (single phase)",
            )
        if delta < opts.k_tol:
            converged = True
            V, phase, n, _ = solve_rachford_rice(z, K, opts, spec.mode)
            inner += n
            break

    x, y = _split(z, K, V)
    if phase != "two-phase":
        x, y = _normalize(x), _normalize(y)
    return FlashResult(
        "PT", converged, T, P, V, np.array(x), np.array(y), np.array(K),
        phase=phase, inner_iters=inner, outer_iters=outer, residual_trace=trace,
        mode=str(spec.mode),
        message="" if converged else f"K not converged in {opts.max_outer} iterations",
    )


# -- PV flash -----------------------------------------------------------------
class _PVResidual:
    """F(T) at fixed phase compositions for a target vapor fraction."""

    def __init__(self, eos, P, z, V, x, y):
        self.eos, self.P, self.z, self.V, self.x, self.y = eos, P, z, V, x, y

    def _F(self, lnK):
        V = self.V
        total = 0.0
        for zi, lk in zip(self.z, lnK):
            k = ad.exp(lk)
            total = total + zi * (k - 1.0) / ((k - 1.0) * V + 1.0)
        return total

    def value(self, T):
        liq_ok, vap_ok = self.eos.branch_ok(T, self.P, self.x, self.y)
        return self._F(self.eos.ln_k_values(T, self.P, self.x, self.y)), liq_ok, vap_ok

    def with_slope(self, T, mode: DerivativeMode):
        if mode.kind == "ad":
            F = self._F(self.eos.ln_k_values(ad.Dual(T, [1.0]), self.P, self.x, self.y))
            return F.value, float(F.tangent[0])
        # central difference on K, chained through dF/dK
        h = mode.step
        K = np.exp(self.eos.ln_k_values(T, self.P, self.x, self.y))
        Kp = np.exp(self.eos.ln_k_values(T + h, self.P, self.x, self.y))
        Km = np.exp(self.eos.ln_k_values(T - h, self.P, self.x, self.y))
        dK = (Kp - Km) / (2.0 * h)
        den = (K - 1.0) * self.V + 1.0
        z = np.asarray(self.z)
        F = float(np.sum(z * (K - 1.0) / den))
        return F, float(np.sum(z / den**2 * dK))


def _scan_bracket(fun, T0, lo, hi, step):
    """Find [a, b] around a sign change of ``fun`` on one continuous branch.

    ``fun(T)`` returns ``(F, liq_ok, vap_ok)``.  F increases with T while both
    phases stay on their branch, so the search heads up when F < 0 and down
    when F > 0, halving the step when it runs off a branch.
    """
    F0, lok, vok = fun(T0)
    evals = 1
    if not (lok and vok):
        # start is off-branch: a liquid without a liquid root is too hot,
        # a vapor without a vapor root too cold
        direction = -1.0 if not lok else 1.0
        s = step
        T = T0
        while True:
            Tn = min(max(T + direction * s, lo), hi)
            Fn, lok, vok = fun(Tn)
            evals += 1
            if lok and vok:
                T0, F0 = Tn, Fn
                break
            if Tn in (lo, hi):
                raise NoSolutionError(f"no T in [{lo}, {hi}] K keeps both phases on their branch")
            T = Tn
    if F0 == 0.0:
        return T0, T0, F0, evals
    direction = 1.0 if F0 < 0.0 else -1.0
    a, Fa = T0, F0
    s = step
    while s > 1e-6:
        b = min(max(a + direction * s, lo), hi)
        if b == a:
            break
        Fb, lok, vok = fun(b)
        evals += 1
        if not (lok and vok):
            s *= 0.5
            continue
        if (Fb > 0.0) != (Fa > 0.0) or Fb == 0.0:
            return (a, b, Fa, evals) if a < b else (b, a, Fb, evals)
        a, Fa = b, Fb
    raise NoSolutionError(f"no sign change of F(T) found in [{lo}, {hi}] K")


def _next_iterate(T, F, dF, a, b, prev_abs, min_slope):
    """Newton step from T, replaced by the bracket midpoint when it is unusable.

    The step is rejected when the slope is tiny or non-finite, when it leaves
    (a, b), or when the last step failed to halve |F| (Newton cycling across
    a kink in the residual).
    """
    mid = 0.5 * (a + b)
    if not math.isfinite(dF) or abs(dF) < min_slope or abs(F) > 0.5 * prev_abs:
        return mid
    Tn = T - F / dF
    return Tn if a < Tn < b else mid


def _safeguarded_newton(slope_fun, T, a, b, fa, tol, opts, trace):
    """Newton on [a, b] with bisection fallback; ``fa`` is F at ``a``.

    Returns ``(T, iterations, ok)``.  Every iteration costs one derivative
    evaluation.
    """
    lo_neg = fa < 0.0
    prev = math.inf
    for it in range(1, opts.max_inner + 1):
        F, dF = slope_fun(T)
        trace.append((T, F))
        if abs(F) < tol:
            return T, it, True
        if (F < 0.0) == lo_neg:
            a = T
        else:
            b = T
        if b - a < 1e-13 * max(1.0, abs(T)):
            return T, it, False
        T, prev = _next_iterate(T, F, dF, a, b, prev, opts.min_slope), abs(F)
    return T, opts.max_inner, False


def flash_pv(eos: SRK, spec: FlashSpec, opts: SolverOptions | None = None) -> FlashResult:
    """Vapor-fraction flash: Newton on T at fixed compositions, compositions by substitution.

    Raises :class:`NoSolutionError` when F(T) has no sign change on a
    continuous branch inside [t_lo, t_hi]; other failures come back as a
    result with ``converged=False``.
    """
    if spec.kind != "PV":
        raise ValueError("flash_pv needs a PV spec")
    opts = opts or SolverOptions()
    z = list(spec.z)
    P, V = float(spec.P), float(spec.V)
    T = float(spec.T_guess) if spec.T_guess is not None else 0.5 * (opts.t_lo + opts.t_hi)
    K = wilson_k(eos.components, T, P)
    x, y = _split(z, K, V)
    x, y = _normalize(x), _normalize(y)

    inner = 0
    trace = []
    for outer in range(1, opts.max_outer + 1):
        res = _PVResidual(eos, P, z, V, x, y)
        a, b, fa, _ = _scan_bracket(res.value, T, opts.t_lo, opts.t_hi, opts.scan_step)
        start = T if a <= T <= b else (a if abs(a - T) < abs(b - T) else b)
        T, n, ok = _safeguarded_newton(
            lambda t: res.with_slope(t, spec.mode), start, a, b, fa, opts.pv_tol, opts, trace
        )
        inner += n
        if not ok:
            return _pv_failure(spec, T, V, x, y, inner, outer, trace, "Newton on T did not converge")
        K = [math.exp(v) for v in eos.ln_k_values(T, P, x, y)]
        xs, ys = _split(z, K, V)
        xn, yn = _normalize(xs), _normalize(ys)
        change = max(max(abs(p - q) for p, q in zip(xn, x)), max(abs(p - q) for p, q in zip(yn, y)))
        x, y = xn, yn
        if change < opts.comp_tol:
            return FlashResult(
                "PV", True, T, P, V, np.array(xs), np.array(ys), np.array(K),
                inner_iters=inner, outer_iters=outer, residual_trace=trace, mode=str(spec.mode),
            )
    return _pv_failure(spec, T, V, x, y, inner, opts.max_outer, trace,
                       f"compositions not converged in {opts.max_outer} iterations")


def _pv_failure(spec, T, V, x, y, inner, outer, trace, msg):
    K = np.array(y) / np.array(x)
    return FlashResult(
        "PV", False, T, spec.P, V, np.array(x), np.array(y), K,
        inner_iters=inner, outer_iters=outer, residual_trace=trace,
        mode=str(spec.mode), message=msg,
    )


# -- PH flash -----------------------------------------------------------------
def stream_enthalpy(eos: SRK, res: FlashResult) -> float:
    """(1 - V) h_L(x) + V h_V(y) for a converged PT result, J/mol."""
    T, P = res.T, res.P
    if res.phase == "liquid":
        return eos.enthalpy(T, P, list(res.x), LIQUID)
    if res.phase == "vapor":
        return eos.enthalpy(T, P, list(res.y), VAPOR)
    x, y = _normalize(list(res.x)), _normalize(list(res.y))
    return (1.0 - res.V) * eos.enthalpy(T, P, x, LIQUID) + res.V * eos.enthalpy(T, P, y, VAPOR)


def stream_enthalpy_slope(eos: SRK, res: FlashResult, z) -> float:
    """Total dH_out/dT along the converged PT solution.

    The flash equations G(u, T) = 0 with u = (ln K, V) are re-evaluated once
    on duals seeded in every u direction and in T; the implicit-function
    theorem then gives du/dT = -G_u^{-1} G_T exactly.
    """
    T, P = res.T, res.P
    if res.phase != "two-phase":
        Td = ad.Dual(T, [1.0])
        comp = list(res.x) if res.phase == "liquid" else list(res.y)
        h = eos.enthalpy(Td, P, comp, LIQUID if res.phase == "liquid" else VAPOR)
        return float(h.tangent[0])

    n = len(z)
    w = n + 2
    seeds = ad.seed(list(np.log(res.K)) + [res.V, T])
    lnK, V, Td = seeds[:n], seeds[n], seeds[n + 1]
    K = [ad.exp(v) for v in lnK]
    x, y = _split(z, K, V)
    x, y = _normalize(x), _normalize(y)
    G = [a - b for a, b in zip(lnK, eos.ln_k_values(Td, P, x, y))]
    G.append(rachford_rice_residual(z, K, V))
    H = (1.0 - V) * eos.enthalpy(Td, P, x, LIQUID) + V * eos.enthalpy(Td, P, y, VAPOR)

    J = ad.jacobian(G, w)
    du = np.linalg.solve(J[:, : n + 1], -J[:, n + 1])
    dH = ad.tangent(H, w)
    return float(dH[n + 1] + dH[: n + 1] @ du)


def feed_enthalpy(eos: SRK, T: float, P: float, z, opts: SolverOptions | None = None) -> float:
    """Enthalpy of a feed at (T, P), split into phases by a PT flash."""
    res = flash_pt(eos, FlashSpec("PT", tuple(z), P, T=T), opts)
    if not res.converged:
        raise FlashError(f"feed PT flash at T={T} K did not converge: {res.message}")
    return stream_enthalpy(eos, res)


def flash_ph(eos: SRK, spec: FlashSpec, opts: SolverOptions | None = None) -> FlashResult:
    """Enthalpy (duty) flash: Newton on T around an inner PT flash.

    H_error(T) = H_total - H_out(T) where H_out comes from the PT flash at T.
    In AD mode dH_error/dT is the exact total derivative through the converged
    inner solution; in FD mode it is a central difference of H_error with an
    inner PT flash on each side.
    """
    if spec.kind != "PH":
        raise ValueError("flash_ph needs a PH spec")
    opts = opts or SolverOptions()
    z = list(spec.z)
    P = float(spec.P)
    H_total = spec.H_total
    tol = opts.ph_rtol * max(1.0, abs(H_total))
    pt_cache: dict[float, FlashResult] = {}

    def pt(T, k_init=None):
        r = pt_cache.get(T)
        if r is None:
            r = flash_pt(eos, FlashSpec("PT", spec.z, P, T=T), opts, k_init=k_init)
            if not r.converged:
                raise FlashError(f"inner PT flash failed at T={T!r} K: {r.message}")
            pt_cache[T] = r
        return r

    def h_err(T, k_init=None):
        r = pt(T, k_init)
        return H_total - stream_enthalpy(eos, r), r

    inner = 0
    trace: list = []

    def fail(T, r, msg):
        return FlashResult(
            "PH", False, T, P, r.V, r.x, r.y, r.K, phase=r.phase,
            inner_iters=inner, outer_iters=len(trace), residual_trace=trace,
            mode=str(spec.mode), message=msg, H_total=H_total,
            H_out=H_total - h_err(T)[0],
        )

    a, b = opts.t_lo, opts.t_hi
    try:
        Ea, ra = h_err(a)
        Eb, rb = h_err(b)
    except FlashError as exc:
        raise FlashError(f"PH flash: {exc}") from exc
    inner += ra.outer_iters + rb.outer_iters
    if Ea < 0.0 or Eb > 0.0:
        raise NoSolutionError(
            f"H_total = {H_total:.6g} J/mol outside [{H_total - Ea:.6g}, {H_total - Eb:.6g}] "
            f"spanned by T in [{a}, {b}] K"
        )

    T = float(spec.T_guess) if spec.T_guess is not None else 0.5 * (a + b)
    r = None
    prev = math.inf
    for it in range(1, opts.max_outer + 1):
        try:
            E, r = h_err(T, None if r is None else r.K)
        except FlashError as exc:
            raise FlashError(f"PH flash outer iteration {it}: {exc}") from exc
        inner += r.outer_iters
        trace.append((T, E))
        if abs(E) < tol:
            return FlashResult(
                "PH", True, T, P, r.V, r.x, r.y, r.K, phase=r.phase,
                inner_iters=inner, outer_iters=it, residual_trace=trace,
                mode=str(spec.mode), H_total=H_total, H_out=H_total - E,
            )
        # H_error decreases with T
        if E > 0.0:
            a = T
        else:
            b = T
        if b - a < 1e-12 * T:
            return fail(T, r, "bracket collapsed without meeting the enthalpy tolerance")
        try:
            dE = _ph_slope(eos, spec.mode, z, T, r, h_err)
        except (FlashError, ad.DomainError, np.linalg.LinAlgError):
            dE = math.nan
        T, prev = float(_next_iterate(T, E, dE, a, b, prev, opts.min_slope)), abs(E)
    return fail(T, r, f"not converged in {opts.max_outer} outer iterations")


def _ph_slope(eos, mode, z, T, r, h_err):
    if mode.kind == "ad":
        return -stream_enthalpy_slope(eos, r, z)
    h = mode.step
    Ep, _ = h_err(T + h, r.K)
    Em, _ = h_err(T - h, r.K)
    return (Ep - Em) / (2.0 * h)


def flash(eos: SRK, spec: FlashSpec, opts: SolverOptions | None = None) -> FlashResult:
    """Dispatch on ``spec.kind``."""
    return {"PT": flash_pt, "PV": flash_pv, "PH": flash_ph}[spec.kind](eos, spec, opts)

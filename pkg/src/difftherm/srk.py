"""Soave-Redlich-Kwong equation of state, generic over ``float`` and :class:`~difftherm.ad.Dual`.

Every function here uses only arithmetic and the elementary functions of
:mod:`difftherm.ad`, so passing duals for T, P or compositions yields exact
first derivatives of compressibilities, fugacity coefficients, enthalpies and
K-values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

from . import ad
from .properties import BinarySet, Component, default_components, h_ideal

R = 8.314462618  # J/(mol K)

# Attraction constant as published with this formulation of SRK.  The usual
# literature value is 0.42748 (relative difference 4.7e-4).
OMEGA_A = 0.42728
OMEGA_B = 0.08664

LIQUID = "liq"
VAPOR = "vap"
_PHASES = (LIQUID, VAPOR)

_SQRT3 = math.sqrt(3.0)


class NoPhysicalRootError(ValueError):
    """No compressibility root exceeds B; the state is infeasible."""


class CompositionError(ValueError):
    pass


def kappa(omega):
    return 0.48 + 1.574 * omega - 0.176 * omega * omega


def alpha(tr, k):
    s = 1.0 + k * (1.0 - ad.sqrt(tr))
    return s * s


def pure_ab(c: Component, T):
    """Pure-component attraction ``a`` (Pa m^6/mol^2) and co-volume ``b`` (m^3/mol)."""
    ac = OMEGA_A * R * R * c.Tc * c.Tc / c.Pc
    return ac * alpha(T / c.Tc, kappa(c.omega)), OMEGA_B * R * c.Tc / c.Pc


def _as_kmatrix(k, n):
    if k is None:
        return None
    if isinstance(k, BinarySet):
        k = k.k
    k = np.asarray(k, dtype=float)
    if k.shape != (n, n):
        raise ValueError(f"k_ij must be {n}x{n}, got {k.shape}")
    return None if not k.any() else k


def _mix_sums(sqrt_a, y, k):
    """q_i = sum_j y_j sqrt(a_j) (1 - k_ij)."""
    n = len(y)
    if k is None:
        q = sum(yj * sj for yj, sj in zip(y, sqrt_a))
        return [q] * n
    return [
        sum(y[j] * sqrt_a[j] * (1.0 - k[i, j]) for j in range(n))
        for i in range(n)
    ]


def mix(a_pure: Sequence, b_pure: Sequence, y: Sequence, k=None):
    """Quadratic mixing for ``a`` and linear mixing for ``b``."""
    n = len(y)
    if len(a_pure) != n or len(b_pure) != n:
        raise ValueError("a, b and y must have the same length")
    sqrt_a = [ad.sqrt(ai) for ai in a_pure]
    q = _mix_sums(sqrt_a, y, _as_kmatrix(k, n))
    a_m = sum(yi * si * qi for yi, si, qi in zip(y, sqrt_a, q))
    b_m = sum(yi * bi for yi, bi in zip(y, b_pure))
    return a_m, b_m


def dimensionless_ab(a_m, b_m, T, P):
    rt = R * T
    return a_m * P / (rt * rt), b_m * P / rt


# -- cubic -------------------------------------------------------------------
class CubicRoots(NamedTuple):
    roots: list
    root_count: int


def _polish(z, b, c, d):
    # one Newton step on the monic cubic; on duals this also turns the
    # tangent into the implicit-function derivative of the root
    dp = (3.0 * z + 2.0 * b) * z + c
    if abs(ad.value(dp)) < 1e-12:
        return z
    p = ((z + b) * z + c) * z + d
    return z - p / dp


def shengjin(a, b, c, d) -> list:
    """Real roots of ``a z^3 + b z^2 + c z + d`` by Shengjin's discriminants.

    Returns the distinct real roots in ascending order.  The case split is
    made on primal values, so derivatives follow the closed form of the case
    that applies.
    """
    As = b * b - 3.0 * a * c
    Bs = b * c - 9.0 * a * d
    Cs = c * c - 3.0 * b * d
    disc = Bs * Bs - 4.0 * As * Cs
    asv, bsv, dv = ad.value(As), ad.value(Bs), ad.value(disc)

    if asv == 0.0 and bsv == 0.0:
        return [-b / (3.0 * a)]
    if dv > 0.0:
        sd = ad.sqrt(disc)
        y1 = As * b + 1.5 * a * (sd - Bs)
        y2 = As * b - 1.5 * a * (sd + Bs)
        return [(-b - (ad.cbrt(y1) + ad.cbrt(y2))) / (3.0 * a)]
    if dv == 0.0:
        k = Bs / As
        return sorted([-b / a + k, -0.5 * k], key=ad.value)
    sa = ad.sqrt(As)
    t = (2.0 * As * b - 3.0 * a * Bs) / (2.0 * As * sa)
    if not -1.0 < ad.value(t) < 1.0:
        # rounding pushed us onto the repeated-root boundary
        k = Bs / As
        return sorted([-b / a + k, -0.5 * k], key=ad.value)
    th = ad.acos(t) / 3.0
    ct, st = ad.cos(th), ad.sin(th)
    z1 = (-b - 2.0 * sa * ct) / (3.0 * a)
    z2 = (-b + sa * (ct + _SQRT3 * st)) / (3.0 * a)
    z3 = (-b + sa * (ct - _SQRT3 * st)) / (3.0 * a)
    return sorted([z1, z2, z3], key=ad.value)


def cubic_roots(A, B) -> CubicRoots:
    """Real roots of ``z^3 - z^2 + (A - B - B^2) z - A B = 0``."""
    if not (math.isfinite(ad.value(A)) and math.isfinite(ad.value(B))):
        raise ad.DomainError("cubic_roots", (ad.value(A), ad.value(B)), "non-finite A or B")
    c1 = A - B - B * B
    c0 = -A * B
    roots = [_polish(z, -1.0, c1, c0) for z in shengjin(1.0, -1.0, c1, c0)]
    roots.sort(key=ad.value)
    return CubicRoots(roots, 1 if len(roots) == 1 else 3)


def select_phase_roots(roots: Sequence, B):
    """(z_liq, z_vap, root_count) from the roots strictly greater than ``B``."""
    bv = ad.value(B)
    phys = [z for z in roots if ad.value(z) > bv]
    if not phys:
        raise NoPhysicalRootError(f"no compressibility root above B={bv!r}")
    z_liq = reduce(ad.minimum, phys)
    z_vap = reduce(ad.maximum, phys)
    return z_liq, z_vap, 1 if len(phys) == 1 else 3


# -- state containers -------------------------------------------------------
@dataclass(frozen=True)
class MixtureState:
    T: float
    P: float
    z: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(self.z))
        if not ad.value(self.T) > 0:
            raise ValueError(f"T must be positive, got {ad.value(self.T)}")
        if not ad.value(self.P) > 0:
            raise ValueError(f"P must be positive, got {ad.value(self.P)}")
        check_composition(self.z, tol=1e-12)


def check_composition(z, tol=1e-12, n=None):
    zv = [ad.value(v) for v in z]
    if n is not None and len(zv) != n:
        raise CompositionError(f"expected {n} mole fractions, got {len(zv)}")
    if not zv:
        raise CompositionError("empty composition")
    if any(not math.isfinite(v) or v < 0.0 for v in zv):
        raise CompositionError(f"mole fractions must be finite and >= 0: {zv}")
    s = math.fsum(zv)
    if abs(s - 1.0) > tol:
        raise CompositionError(f"mole fractions sum to {s!r}, not 1")


@dataclass(frozen=True)
class EosEvaluation:
    A: object
    B: object
    z_liq: object
    z_vap: object
    phi_liq: np.ndarray
    phi_vap: np.ndarray
    h_dep_liq: object
    h_dep_vap: object
    root_count: int


class _Phase(NamedTuple):
    A: object
    B: object
    z: object
    a_m: object
    b_m: object
    sa: list  # sum_j y_j a_ij
    root_count: int


class SRK:
    """SRK property package for a fixed component list."""

    def __init__(self, components: Sequence[Component] | None = None, kij=None):
        self.components = tuple(components) if components is not None else tuple(default_components())
        n = len(self.components)
        if n == 0:
            raise ValueError("need at least one component")
        self.kij = kij if isinstance(kij, BinarySet) else BinarySet(np.zeros((n, n)) if kij is None else kij)
        if len(self.kij) != n:
            raise ValueError("k_ij size does not match the component count")
        self._k = _as_kmatrix(self.kij, n)
        self._ac = [OMEGA_A * R * R * c.Tc * c.Tc / c.Pc for c in self.components]
        self._sqrt_ac = [math.sqrt(v) for v in self._ac]
        self._b = [OMEGA_B * R * c.Tc / c.Pc for c in self.components]
        self._kappa = [kappa(c.omega) for c in self.components]
        self._tc = [c.Tc for c in self.components]

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.components]

    # -- pure and mixture parameters --------------------------------------
    def _sqrt_a(self, T):
        """sqrt(a_i) and d sqrt(a_i)/dT, generic in T."""
        rt = ad.sqrt(T)
        out, dout = [], []
        for sac, k, tc in zip(self._sqrt_ac, self._kappa, self._tc):
            s = 1.0 + k * (1.0 - rt / math.sqrt(tc))
            if not ad.value(s) > 0.0:
                raise ad.DomainError("sqrt", ad.value(s), "alpha function lost its positive root")
            out.append(sac * s)
            dout.append(-sac * k / (2.0 * math.sqrt(tc)) / rt)
        return out, dout

    def pure_params(self, T):
        """Lists of a_i and b_i at temperature ``T``."""
        sq, _ = self._sqrt_a(T)
        return [s * s for s in sq], list(self._b)

    def mixture_params(self, T, y):
        """(a_m, b_m, da_m/dT) for composition ``y``."""
        sq, dsq = self._sqrt_a(T)
        q = _mix_sums(sq, y, self._k)
        a_m = sum(yi * si * qi for yi, si, qi in zip(y, sq, q))
        da_m = 2.0 * sum(yi * di * qi for yi, di, qi in zip(y, dsq, q))
        b_m = sum(yi * bi for yi, bi in zip(y, self._b))
        return a_m, b_m, da_m

    def _phase(self, T, P, y, phase, sq=None):
        if sq is None:
            sq, _ = self._sqrt_a(T)
        q = _mix_sums(sq, y, self._k)
        sa = [si * qi for si, qi in zip(sq, q)]
        a_m = sum(yi * v for yi, v in zip(y, sa))
        b_m = sum(yi * bi for yi, bi in zip(y, self._b))
        A, B = dimensionless_ab(a_m, b_m, T, P)
        roots = cubic_roots(A, B).roots
        z_liq, z_vap, count = select_phase_roots(roots, B)
        if phase == LIQUID:
            z = z_liq
        elif phase == VAPOR:
            z = z_vap
        else:
            raise ValueError(f"phase must be one of {_PHASES}, got {phase!r}")
        return _Phase(A, B, z, a_m, b_m, sa, count)

    def _ln_phi(self, ph: _Phase):
        A, B, z, a_m, b_m = ph.A, ph.B, ph.z, ph.a_m, ph.b_m
        zm1 = z - 1.0
        l1 = ad.log(z - B)
        l2 = ad.log(1.0 + B / z)
        ab = A / B
        return [
            (bi / b_m) * zm1 - l1 - ab * (2.0 * si / a_m - bi / b_m) * l2
            for bi, si in zip(self._b, ph.sa)
        ]

    # -- public property routines --------------------------------------------
    def compressibility(self, T, P, y, phase):
        return self._phase(T, P, y, phase).z

    def ln_fugacity_coeffs(self, T, P, y, phase) -> list:
        return self._ln_phi(self._phase(T, P, y, phase))

    def fugacity_coeffs(self, T, P, y, phase):
        phi = [ad.exp(v) for v in self.ln_fugacity_coeffs(T, P, y, phase)]
        return _as_output(phi)

    def enthalpy_departure(self, T, P, y, phase):
        """h - h_ig at the same T and P, J/mol."""
        ph = self._phase(T, P, y, phase)
        _, _, da_m = self.mixture_params(T, y)
        return _h_dep(T, ph, da_m)

    def ideal_enthalpy(self, T, y):
        return sum(yi * h_ideal(c, T) for yi, c in zip(y, self.components))

    def enthalpy(self, T, P, y, phase):
        """Molar enthalpy of a phase: ideal-gas part plus departure, J/mol."""
        return self.ideal_enthalpy(T, y) + self.enthalpy_departure(T, P, y, phase)

    def evaluate(self, state: MixtureState) -> EosEvaluation:
        """Both phase roots, fugacity coefficients and departures at one composition."""
        T, P, y = state.T, state.P, list(state.z)
        sq, _ = self._sqrt_a(T)
        liq = self._phase(T, P, y, LIQUID, sq)
        vap = self._phase(T, P, y, VAPOR, sq)
        _, _, da_m = self.mixture_params(T, y)
        return EosEvaluation(
            A=liq.A,
            B=liq.B,
            z_liq=liq.z,
            z_vap=vap.z,
            phi_liq=_as_output([ad.exp(v) for v in self._ln_phi(liq)]),
            phi_vap=_as_output([ad.exp(v) for v in self._ln_phi(vap)]),
            h_dep_liq=_h_dep(T, liq, da_m),
            h_dep_vap=_h_dep(T, vap, da_m),
            root_count=liq.root_count,
        )

    def ln_k_values(self, T, P, x, y) -> list:
        """ln K_i = ln phi_liq,i(T, P, x) - ln phi_vap,i(T, P, y), generic."""
        sq, _ = self._sqrt_a(T)
        ll = self._ln_phi(self._phase(T, P, x, LIQUID, sq))
        lv = self._ln_phi(self._phase(T, P, y, VAPOR, sq))
        return [a - b for a, b in zip(ll, lv)]

    def k_values(self, T, P, x, y):
        return _as_output([ad.exp(v) for v in self.ln_k_values(T, P, x, y)])

    def k_derivatives(self, T, P, x, y, wrt) -> np.ndarray:
        """dK_i/d(wrt) by forward-mode AD.

        ``wrt`` is ``"T"``, ``"P"``, or ``("x", i)`` / ``("y", i)`` for the
        mole number of species ``i`` in the liquid or vapor phase.  Mole
        numbers are renormalised after seeding, so the composition derivative
        is taken at fixed amounts of the other species.
        """
        x = [float(v) for v in x]
        y = [float(v) for v in y]
        T, P = float(T), float(P)
        if wrt == "T":
            T = ad.Dual(T, [1.0])
        elif wrt == "P":
            P = ad.Dual(P, [1.0])
        else:
            which, i = wrt
            if which not in ("x", "y"):
                raise ValueError(f"unknown derivative target {wrt!r}")
            comp = x if which == "x" else y
            raw = [ad.Dual(v, [1.0 if j == i else 0.0]) for j, v in enumerate(comp)]
            tot = sum(raw)
            comp = [v / tot for v in raw]
            if which == "x":
                x = comp
            else:
                y = comp
        K = [ad.exp(v) for v in self.ln_k_values(T, P, x, y)]
        return np.array([ad.tangent(k, 1)[0] for k in K])

    def branch_ok(self, T, P, x, y) -> tuple[bool, bool]:
        """Whether the liquid (at x) and vapor (at y) roots lie on their own branch.

        With three roots the choice is unambiguous.  A lone root is
        liquid-like below the inflection point of the cubic (z = 1/3) and
        vapor-like above it; a liquid phase handed a vapor-like root (or the
        reverse) makes K jump.
        """
        sq, _ = self._sqrt_a(T)
        liq = self._phase(T, P, x, LIQUID, sq)
        vap = self._phase(T, P, y, VAPOR, sq)
        liq_ok = liq.root_count == 3 or ad.value(liq.z) < 1.0 / 3.0
        vap_ok = vap.root_count == 3 or ad.value(vap.z) > 1.0 / 3.0
        return liq_ok, vap_ok

    def root_counts(self, T, P, x, y) -> tuple[int, int]:
        """Number of physical roots seen by the liquid (at x) and vapor (at y) phases."""
        return (
            self._phase(T, P, x, LIQUID).root_count,
            self._phase(T, P, y, VAPOR).root_count,
        )


def _h_dep(T, ph: _Phase, da_m):
    return R * T * (ph.z - 1.0) + (T * da_m - ph.a_m) / ph.b_m * ad.log(1.0 + ph.B / ph.z)


def _as_output(xs: list):
    if any(isinstance(v, ad.Dual) for v in xs):
        return xs
    return np.array(xs, dtype=float)


def wilson_k(components: Sequence[Component], T, P) -> list:
    """Wilson's correlation K_i = (Pc_i/P) exp(5.373 (1 + w_i)(1 - Tc_i/T))."""
    return [c.Pc / P * ad.exp(5.373 * (1.0 + c.omega) * (1.0 - c.Tc / T)) for c in components]

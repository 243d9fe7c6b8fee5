"""Scenario runner producing the AD-vs-FD comparison tables.

Four report kinds exist:

``curve``
    dK/dT over a temperature grid and dK/dP over a pressure grid, AD and a
    set of FD steps, with a smoothness metric per curve.
``distribution``
    dF/dT of the vapor-fraction residual for random feeds at one starting
    point, with spread and outlier statistics per derivative mode.
``iterations``
    Newton iteration counts and convergence flags of PV and PH flashes per
    derivative mode.
``sweep``
    FD deviation from the AD derivative as a function of step size.

Every report is a flat list of records plus a summary that can be
recomputed from those records.  Output is deterministic for a given seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import ad
from .findiff import FdScheme, fd_derivative, step_sweep
from .flash import (
    AD,
    DerivativeMode,
    FlashSpec,
    SolverOptions,
    _PVResidual,
    _normalize,
    _split,
    flash_ph,
    flash_pt,
    flash_pv,
    stream_enthalpy,
)
from .srk import SRK, wilson_k

CSV_SCHEMA_VERSION = 1
KINDS = ("curve", "distribution", "iterations", "sweep")
BAR = 1e5

_DEFAULT_STEPS_T = (1e-1, 1e-3, 1e-6, 1e-8)
_DEFAULT_STEPS_P = (50.0, 10.0, 5.0, 1.0, 0.1)


def _linspace(lo, hi, n):
    return tuple(float(v) for v in np.linspace(lo, hi, n))


@dataclass(frozen=True)
class Scenario:
    """One experiment definition.

    Grids are in K and Pa.  ``modes`` lists derivative modes as strings
    (``"ad"``, ``"fd:<step>"``); for ``curve`` and ``sweep`` the FD steps are
    taken from ``fd_steps_T`` / ``fd_steps_P`` instead.
    """

    id: str
    kind: str
    feed: tuple = (0.25, 0.25, 0.25, 0.25)
    T_grid: tuple = _linspace(200.0, 300.0, 101)
    P_grid: tuple = _linspace(10 * BAR, 19 * BAR, 91)
    T_fixed: float = 250.0
    P_fixed: float = 18 * BAR
    fd_steps_T: tuple = _DEFAULT_STEPS_T
    fd_steps_P: tuple = _DEFAULT_STEPS_P
    phase_compositions: str = "flash"
    modes: tuple = ("ad", "fd:1e-3", "fd:1e-6")
    V_targets: tuple = (0.7,)
    flash_kinds: tuple = ("PV", "PH")
    n_samples: int = 500
    rng_seed: int = 20240501
    T_start: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"scenario kind must be one of {KINDS}, got {self.kind!r}")
        if not self.id or any(c in self.id for c in "/\\"):
            raise ValueError(f"bad scenario id {self.id!r}")
        for name in ("T_grid", "P_grid", "fd_steps_T", "fd_steps_P", "modes", "V_targets", "flash_kinds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "feed", tuple(float(v) for v in self.feed))
        if self.kind == "curve" and not (self.T_grid or self.P_grid):
            raise ValueError("curve scenario needs a T or P grid")
        if self.kind in ("distribution", "iterations"):
            if self.n_samples < 1:
                raise ValueError("n_samples must be >= 1")
            if not self.modes:
                raise ValueError("modes must be non-empty")
            for m in self.modes:
                DerivativeMode.parse(m)
        if self.kind == "iterations":
            if not self.V_targets:
                raise ValueError("V_targets must be non-empty")
            if not set(self.flash_kinds) <= {"PV", "PH"} or not self.flash_kinds:
                raise ValueError("flash_kinds must be a non-empty subset of PV, PH")
        if self.phase_compositions not in ("flash", "feed"):
            raise ValueError("phase_compositions must be 'flash' or 'feed'")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    @classmethod
    def from_mapping(cls, sid: str, m: Mapping[str, Any]) -> "Scenario":
        """Build from a config table; pressures in the table are in bar."""
        m = dict(m)
        kw: dict[str, Any] = {"id": sid, "kind": m.pop("kind")}
        if "T_range" in m:
            lo, hi, n = m.pop("T_range")
            kw["T_grid"] = _linspace(lo, hi, int(n))
        if "T_grid" in m:
            kw["T_grid"] = tuple(float(v) for v in m.pop("T_grid"))
        if "P_range_bar" in m:
            lo, hi, n = m.pop("P_range_bar")
            kw["P_grid"] = _linspace(lo * BAR, hi * BAR, int(n))
        if "P_grid_bar" in m:
            kw["P_grid"] = tuple(float(v) * BAR for v in m.pop("P_grid_bar"))
        if "P_bar" in m:
            kw["P_fixed"] = float(m.pop("P_bar")) * BAR
        if "fd_steps_P_pa" in m:
            kw["fd_steps_P"] = tuple(float(v) for v in m.pop("fd_steps_P_pa"))
        simple = {
            "feed", "T_fixed", "fd_steps_T", "phase_compositions", "modes",
            "V_targets", "flash_kinds", "n_samples", "rng_seed", "T_start",
        }
        for k in list(m):
            if k in simple:
                kw[k] = m.pop(k)
        if m:
            raise ValueError(f"scenario {sid!r}: unknown keys {sorted(m)}")
        return cls(**kw)


@dataclass
class RunReport:
    scenario_id: str
    kind: str
    columns: list
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for rec in self.records:
            w.writerow([_fmt(rec.get(c)) for c in self.columns])
        return buf.getvalue()

    def summary_text(self) -> str:
        doc = {
            "scenario": self.scenario_id,
            "kind": self.kind,
            "schema_version": CSV_SCHEMA_VERSION,
            "records": len(self.records),
            "summary": _jsonable(self.summary),
        }
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"

    @property
    def csv_name(self) -> str:
        return f"{self.scenario_id}.{self.kind}.csv"

    @property
    def summary_name(self) -> str:
        return f"{self.scenario_id}.summary.json"

    def write(self, out_dir: str | Path) -> list[Path]:
        """Write ``<id>.<kind>.csv`` and ``<id>.summary.json`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / self.csv_name, out / self.summary_name]
        paths[0].write_text(self.csv_text())
        paths[1].write_text(self.summary_text())
        return paths


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


# -- statistics ---------------------------------------------------------------
def smoothness_metric(values: Sequence[float]) -> float | None:
    """max |adjacent change| / median |adjacent change|; None when undefined.

    Undefined for fewer than two points, and when the median change is zero.
    Non-finite entries are dropped first.
    """
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size < 2:
        return None
    d = np.abs(np.diff(v))
    med = float(np.median(d))
    if med == 0.0:
        return None
    return float(d.max() / med)


def tukey_outliers(values: Sequence[float], k: float = 10.0) -> int:
    """Count of finite values outside [Q1 - k IQR, Q3 + k IQR]."""
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return 0
    q1, q3 = np.percentile(v, [25.0, 75.0])
    iqr = q3 - q1
    return int(np.count_nonzero((v < q1 - k * iqr) | (v > q3 + k * iqr)))


def describe(values: Sequence[float]) -> dict:
    """count, finite count, mean, sample variance, min, max over finite values."""
    vals = list(values)
    v = np.asarray([x for x in vals if math.isfinite(x)], dtype=float)
    out = {"count": len(vals), "finite": int(v.size), "non_finite": len(vals) - int(v.size)}
    if v.size:
        out.update(mean=float(v.mean()), min=float(v.min()), max=float(v.max()))
        out["variance"] = float(v.var(ddof=1)) if v.size > 1 else 0.0
    else:
        out.update(mean=None, min=None, max=None, variance=None)
    return out


def sample_compositions(n: int, n_components: int, seed: int) -> np.ndarray:
    """``n`` feeds drawn uniformly from the simplex (normalized exponentials)."""
    rng = np.random.default_rng(seed)
    e = rng.exponential(size=(n, n_components))
    return e / e.sum(axis=1, keepdims=True)


# -- derivative curves --------------------------------------------------------
def _phase_comps(eos, sc: Scenario, T, P):
    if sc.phase_compositions == "feed":
        return list(sc.feed), list(sc.feed)
    r = flash_pt(eos, FlashSpec("PT", sc.feed, P, T=T))
    if not r.converged:
        raise RuntimeError(f"PT flash at T={T} K, P={P} Pa did not converge")
    return list(r.x), list(r.y)


def _curve_point(eos, var, T, P, x, y, mode: str):
    if mode == "ad":
        return eos.k_derivatives(T, P, x, y, var)
    h = float(mode.split(":")[1])
    if var == "T":
        return fd_derivative(lambda t: eos.k_values(t, P, x, y), T, FdScheme("central", h))
    return fd_derivative(lambda p: eos.k_values(T, p, x, y), P, FdScheme("central", h))


def run_dk_curves(sc: Scenario, eos: SRK | None = None) -> RunReport:
    eos = eos or SRK()
    names = eos.names
    cols = ["variable", "T", "P", "mode"] + [f"dK_{n}" for n in names] + ["ok", "error"]
    rep = RunReport(sc.id, "curve", cols)
    plan = [("T", T, sc.P_fixed, sc.fd_steps_T) for T in sc.T_grid]
    plan += [("P", sc.T_fixed, P, sc.fd_steps_P) for P in sc.P_grid]
    for var, T, P, steps in plan:
        modes = ["ad"] + [f"fd:{h!r}" for h in steps]
        try:
            x, y = _phase_comps(eos, sc, T, P)
            comp_err = None
        except Exception as exc:  # recorded per point, the run goes on
            comp_err = str(exc)
        for mode in modes:
            rec = {"variable": var, "T": T, "P": P, "mode": mode}
            try:
                if comp_err:
                    raise RuntimeError(comp_err)
                d = _curve_point(eos, var, T, P, x, y, mode)
                rec.update({f"dK_{n}": float(v) for n, v in zip(names, d)}, ok=True)
            except Exception as exc:
                rec.update({f"dK_{n}": math.nan for n in names}, ok=False, error=str(exc))
            rep.records.append(rec)
    rep.summary = summarize_curves(rep.records, names)
    return rep


def summarize_curves(records: Sequence[Mapping], names: Sequence[str]) -> dict:
    """Per variable, mode and species: smoothness metric plus descriptive stats."""
    out: dict = {}
    groups: dict = {}
    for r in records:
        groups.setdefault((r["variable"], r["mode"]), []).append(r)
    for (var, mode), rows in groups.items():
        per = {}
        for n in names:
            vals = [float(r[f"dK_{n}"]) for r in rows]
            per[n] = {"smoothness": smoothness_metric(vals), **describe(vals)}
        out.setdefault(var, {})[mode] = {
            "points": len(rows),
            "failed": sum(1 for r in rows if not _truthy(r["ok"])),
            "species": per,
        }
    return out


def _truthy(v) -> bool:
    return v is True or v == "true"


# -- distribution study -------------------------------------------------------
def pv_start_point(eos: SRK, z, P, V, T0):
    """Wilson-initialized phase compositions at the PV starting temperature."""
    K = wilson_k(eos.components, T0, P)
    x, y = _split(list(z), K, V)
    return _normalize(x), _normalize(y)


def run_distribution_study(sc: Scenario, eos: SRK | None = None) -> RunReport:
    eos = eos or SRK()
    n = eos.n
    opts = SolverOptions()
    T0 = sc.T_start if sc.T_start is not None else 0.5 * (opts.t_lo + opts.t_hi)
    V = sc.V_targets[0]
    cols = ["sample"] + [f"z_{nm}" for nm in eos.names] + ["mode", "T", "dF_dT", "ok", "error"]
    rep = RunReport(sc.id, "distribution", cols)
    feeds = sample_compositions(sc.n_samples, n, sc.rng_seed)
    modes = [DerivativeMode.parse(m) for m in sc.modes]
    for s, z in enumerate(feeds):
        base = {"sample": s, **{f"z_{nm}": float(v) for nm, v in zip(eos.names, z)}, "T": T0}
        try:
            x, y = pv_start_point(eos, z, sc.P_fixed, V, T0)
            res = _PVResidual(eos, sc.P_fixed, list(z), V, x, y)
            setup_err = None
        except Exception as exc:
            setup_err = str(exc)
        for m in modes:
            rec = dict(base, mode=str(m))
            try:
                if setup_err:
                    raise RuntimeError(setup_err)
                _, d = res.with_slope(T0, m)
                rec.update(dF_dT=float(d), ok=True)
            except Exception as exc:
                rec.update(dF_dT=math.nan, ok=False, error=str(exc))
            rep.records.append(rec)
    rep.summary = summarize_distribution(rep.records)
    rep.summary["V"] = V
    rep.summary["T"] = T0
    return rep


def summarize_distribution(records: Sequence[Mapping]) -> dict:
    by_mode: dict = {}
    for r in records:
        by_mode.setdefault(r["mode"], []).append(r)
    out = {}
    for mode, rows in by_mode.items():
        vals = [float(r["dF_dT"]) for r in rows]
        out[mode] = {
            **describe(vals),
            "failed": sum(1 for r in rows if not _truthy(r["ok"])),
            "outliers": tukey_outliers(vals),
        }
    return {"modes": out}


# -- iteration benchmark ------------------------------------------------------
def run_iteration_benchmark(sc: Scenario, eos: SRK | None = None) -> RunReport:
    """PV and PH flashes over V targets x sampled feeds x derivative modes.

    PH targets are the enthalpies of the AD-mode PV solutions, so both flash
    kinds aim at the same equilibrium state.  PV counts Newton steps on T
    (summed over composition updates); PH counts outer Newton steps.
    """
    eos = eos or SRK()
    cols = (
        ["sample"] + [f"z_{nm}" for nm in eos.names]
        + ["V", "flash", "mode", "converged", "iterations", "T", "error"]
    )
    rep = RunReport(sc.id, "iterations", cols)
    feeds = sample_compositions(sc.n_samples, eos.n, sc.rng_seed)
    modes = [DerivativeMode.parse(m) for m in sc.modes]
    P = sc.P_fixed
    for s, zf in enumerate(feeds):
        z = tuple(float(v) for v in zf)
        zcols = {f"z_{nm}": v for nm, v in zip(eos.names, z)}
        for V in sc.V_targets:
            H, h_err = None, None
            if "PH" in sc.flash_kinds:
                try:
                    ref = flash_pv(eos, FlashSpec("PV", z, P, V=V))
                    if not ref.converged:
                        raise RuntimeError(f"reference PV flash failed: {ref.message}")
                    H = stream_enthalpy(eos, ref)
                except Exception as exc:
                    h_err = str(exc)
            for kind in sc.flash_kinds:
                for m in modes:
                    rec = {"sample": s, **zcols, "V": V, "flash": kind, "mode": str(m)}
                    try:
                        if kind == "PV":
                            r = flash_pv(eos, FlashSpec("PV", z, P, V=V, mode=m))
                            it = r.inner_iters
                        else:
                            if h_err:
                                raise RuntimeError(h_err)
                            r = flash_ph(eos, FlashSpec("PH", z, P, H=H, mode=m))
                            it = r.outer_iters
                        rec.update(converged=r.converged, iterations=it, T=r.T,
                                   error=r.message or None)
                    except Exception as exc:
                        rec.update(converged=False, iterations=None, T=math.nan, error=str(exc))
                    rep.records.append(rec)
    rep.summary = summarize_iterations(rep.records)
    return rep


def summarize_iterations(records: Sequence[Mapping]) -> dict:
    """Per flash kind: per-mode counts and AD-vs-FD pairwise comparisons."""
    out: dict = {}
    cells: dict = {}
    for r in records:
        cells.setdefault((r["flash"], r["sample"], float(r["V"])), {})[r["mode"]] = r
    kinds = sorted({k for k, _, _ in cells})
    for kind in kinds:
        kc = [v for (k, _, _), v in cells.items() if k == kind]
        modes = sorted({m for c in kc for m in c})
        per_mode = {}
        for m in modes:
            rows = [c[m] for c in kc if m in c]
            conv = [r for r in rows if _truthy(r["converged"])]
            its = [int(r["iterations"]) for r in conv]
            per_mode[m] = {
                "instances": len(rows),
                "converged": len(conv),
                "success_rate": len(conv) / len(rows) if rows else None,
                "median_iterations": float(np.median(its)) if its else None,
                "mean_iterations": float(np.mean(its)) if its else None,
            }
        pairs = {}
        for m in modes:
            if m == "ad":
                continue
            joint = ad_le = fd_only = 0
            dT = []
            for c in kc:
                a, f = c.get("ad"), c.get(m)
                if a is None or f is None:
                    continue
                ac, fc = _truthy(a["converged"]), _truthy(f["converged"])
                if fc and not ac:
                    fd_only += 1
                if ac and fc:
                    joint += 1
                    ad_le += int(a["iterations"]) <= int(f["iterations"])
                    dT.append(abs(float(a["T"]) - float(f["T"])))
            pairs[m] = {
                "jointly_converged": joint,
                "ad_le_fd": ad_le,
                "ad_le_fd_fraction": ad_le / joint if joint else None,
                "fd_only_converged": fd_only,
                "max_abs_dT": max(dT) if dT else None,
            }
        out[kind] = {"modes": per_mode, "ad_vs": pairs}
    return out


# -- step sweep ---------------------------------------------------------------
def run_step_sweep(sc: Scenario, eos: SRK | None = None) -> RunReport:
    """FD deviation from AD versus step for every species, in T and in P."""
    eos = eos or SRK()
    cols = ["variable", "species", "T", "P", "step", "derivative", "reference", "deviation", "ok", "error"]
    rep = RunReport(sc.id, "sweep", cols)
    T, P = sc.T_fixed, sc.P_fixed
    x, y = _phase_comps(eos, sc, T, P)
    for var, steps in (("T", sc.fd_steps_T), ("P", sc.fd_steps_P)):
        if not steps:
            continue
        ref = eos.k_derivatives(T, P, x, y, var)
        for i, nm in enumerate(eos.names):
            if var == "T":
                f = lambda t, i=i: eos.k_values(t, P, x, y)[i]  # noqa: E731
                x0 = T
            else:
                f = lambda p, i=i: eos.k_values(T, p, x, y)[i]  # noqa: E731
                x0 = P
            for row in step_sweep(f, x0, steps, float(ref[i])):
                rep.records.append({
                    "variable": var, "species": nm, "T": T, "P": P, "step": row.step,
                    "derivative": row.derivative, "reference": float(ref[i]),
                    "deviation": row.deviation, "ok": row.ok, "error": row.error,
                })
    rep.summary = summarize_sweep(rep.records)
    return rep


def summarize_sweep(records: Sequence[Mapping]) -> dict:
    """Per variable and species: step of least deviation and the U-curve check."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r["variable"], r["species"]), []).append(r)
    out: dict = {}
    for (var, sp), rows in groups.items():
        dev = [float(r["deviation"]) for r in rows]
        steps = [float(r["step"]) for r in rows]
        finite = [i for i, d in enumerate(dev) if math.isfinite(d)]
        entry: dict = {"steps": steps, "deviations": dev}
        if finite:
            k = min(finite, key=lambda i: dev[i])
            order = sorted(range(len(steps)), key=lambda i: -steps[i])
            smallest = order[-1]
            entry.update(
                best_step=steps[k],
                min_deviation=dev[k],
                interior_minimum=k not in (order[0], order[-1]),
                smallest_step_ratio=dev[smallest] / dev[k] if dev[k] > 0 else None,
            )
        out.setdefault(var, {})[sp] = entry
    return out


# -- dispatch -----------------------------------------------------------------
_RUNNERS = {
    "curve": run_dk_curves,
    "distribution": run_distribution_study,
    "iterations": run_iteration_benchmark,
    "sweep": run_step_sweep,
}


def run_scenario(sc: Scenario, eos: SRK | None = None) -> RunReport:
    return _RUNNERS[sc.kind](sc, eos)


def default_scenarios() -> dict[str, Scenario]:
    """The reference experiment set."""
    return {
        "dk-curves": Scenario("dk-curves", "curve"),
        "step-sweep": Scenario("step-sweep", "sweep", fd_steps_T=(10.0, 1.0, 0.1, 1e-4, 1e-8)),
        "distribution": Scenario("distribution", "distribution"),
        "iterations": Scenario(
            "iterations", "iterations",
            modes=("ad", "fd:1e-3", "fd:1e-6", "fd:1e-8"),
            V_targets=tuple(round(0.1 * k, 1) for k in range(1, 10)),
            n_samples=3,
        ),
    }


__all__ = [
    "CSV_SCHEMA_VERSION",
    "RunReport",
    "Scenario",
    "default_scenarios",
    "describe",
    "run_distribution_study",
    "run_dk_curves",
    "run_iteration_benchmark",
    "run_scenario",
    "run_step_sweep",
    "sample_compositions",
    "smoothness_metric",
    "summarize_curves",
    "summarize_distribution",
    "summarize_iterations",
    "summarize_sweep",
    "tukey_outliers",
]

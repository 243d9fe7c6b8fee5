"""Pure-component constants, binary interaction parameters and ideal-gas enthalpy."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ad

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

T_REF = 298.15
T_MIN = 150.0
T_MAX = 500.0

_REQUIRED = ("name", "Tc", "Pc", "omega", "cp_coeffs", "h_ref")


class ComponentDataError(ValueError):
    """Invalid or incomplete component data."""


class TemperatureRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    name: str
    Tc: float
    Pc: float
    omega: float
    cp_coeffs: tuple[float, float, float, float]
    h_ref: float = 0.0

    def __post_init__(self):
        _check_component(self)


def _check_component(c: Component) -> None:
    def bad(fld, why):
        raise ComponentDataError(f"{c.name}: field {fld!r} {why}")

    for fld in ("Tc", "Pc", "omega", "h_ref"):
        if not math.isfinite(getattr(c, fld)):
            bad(fld, "is not finite")
    if not c.Tc > 0:
        bad("Tc", f"must be positive, got {c.Tc}")
    if not c.Pc > 0:
        bad("Pc", f"must be positive, got {c.Pc}")
    if not -0.5 < c.omega < 1.0:
        bad("omega", f"outside (-0.5, 1.0), got {c.omega}")
    if len(c.cp_coeffs) != 4 or not all(math.isfinite(v) for v in c.cp_coeffs):
        bad("cp_coeffs", "must be 4 finite numbers")
    grid = np.linspace(T_MIN, T_MAX, 351)
    if np.any(np.polyval(c.cp_coeffs[::-1], grid) <= 0):
        bad("cp_coeffs", f"give cp <= 0 somewhere in [{T_MIN}, {T_MAX}] K")


@dataclass(frozen=True)
class BinarySet:
    """Symmetric binary interaction matrix with a zero diagonal."""

    k: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.array(self.k, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ComponentDataError("k_ij must be a square matrix")
        if not np.all(np.isfinite(k)):
            raise ComponentDataError("k_ij entries must be finite")
        if np.any(np.diag(k) != 0.0):
            raise ComponentDataError("k_ii must be 0")
        if not np.array_equal(k, k.T):
            raise ComponentDataError("k_ij must be symmetric")
        k.flags.writeable = False
        object.__setattr__(self, "k", k)

    @classmethod
    def zeros(cls, n: int) -> "BinarySet":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_pairs(cls, n: int, pairs: Mapping[tuple[int, int], float]) -> "BinarySet":
        k = np.zeros((n, n))
        for (i, j), v in pairs.items():
            if i == j:
                raise ComponentDataError("k_ii must be 0")
            k[i, j] = k[j, i] = v
        return cls(k)

    def __len__(self):
        return self.k.shape[0]


def _parse_record(rec: Mapping, index: int) -> Component:
    name = rec.get("name", f"<record {index}>")
    for fld in _REQUIRED:
        if fld not in rec:
            raise ComponentDataError(f"{name}: missing field {fld!r}")
    try:
        coeffs = tuple(float(v) for v in rec["cp_coeffs"])
        return Component(
            name=str(rec["name"]),
            Tc=float(rec["Tc"]),
            Pc=float(rec["Pc"]),
            omega=float(rec["omega"]),
            cp_coeffs=coeffs,
            h_ref=float(rec["h_ref"]),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ComponentDataError):
            raise
        raise ComponentDataError(f"{name}: {exc}") from None


def parse_components(text: str) -> list[Component]:
    """Parse TOML component text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ComponentDataError(str(exc)) from None
    return load_components(doc)


def load_components(source: str | Path | Mapping | None = None) -> list[Component]:
    """Load components from a TOML file or an already parsed mapping.

    ``None`` loads the bundled light-hydrocarbon set.  Records are returned in
    document order.
    """
    if source is None:
        text = resources.files("difftherm.data").joinpath("components.toml").read_text()
        return parse_components(text)
    if isinstance(source, Mapping):
        doc = source
    else:
        try:
            text = Path(source).read_text()
        except FileNotFoundError:
            raise ComponentDataError(f"component file not found: {source}") from None
        return parse_components(text)

    records = doc.get("component", [])
    if not records:
        raise ComponentDataError("no component records in document")
    comps = [_parse_record(r, i) for i, r in enumerate(records)]
    names = [c.name for c in comps]
    if len(set(names)) != len(names):
        raise ComponentDataError(f"duplicate component names: {names}")
    return comps


@lru_cache(maxsize=None)
def _bundled() -> tuple[Component, ...]:
    return tuple(load_components())


def default_components() -> list[Component]:
    return list(_bundled())


def _check_T(T) -> None:
    t = ad.value(T)
    if not T_MIN <= t <= T_MAX:
        raise TemperatureRangeError(f"T = {t} K outside [{T_MIN}, {T_MAX}] K")


def cp_ideal(c: Component, T):
    """Ideal-gas heat capacity, J/(mol K)."""
    _check_T(T)
    c0, c1, c2, c3 = c.cp_coeffs
    return c0 + T * (c1 + T * (c2 + T * c3))


def h_ideal(c: Component, T):
    """Ideal-gas molar enthalpy, J/mol: h_ref plus the closed-form integral of cp."""
    _check_T(T)
    c0, c1, c2, c3 = c.cp_coeffs

    def prim(t):
        return t * (c0 + t * (c1 / 2 + t * (c2 / 3 + t * c3 / 4)))

    return c.h_ref + (prim(T) - prim(T_REF))


def component_names(components: Sequence[Component]) -> list[str]:
    return [c.name for c in components]

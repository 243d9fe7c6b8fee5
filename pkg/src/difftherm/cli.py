"""Command-line interface: ``difftherm flash ...`` and ``difftherm experiment ...``.

Exit status is 0 on success, 2 when a flash ran but did not converge, and 1
for any error (bad input, missing files, unknown scenario).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .experiments import RunReport, Scenario, run_scenario
from .flash import (
    DerivativeMode,
    FlashError,
    FlashSpec,
    SolverOptions,
    feed_enthalpy,
    flash,
)
from .properties import BinarySet, ComponentDataError, default_components, load_components, tomllib
from .srk import SRK

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
FEED_SUM_TOL = 1e-6

log = logging.getLogger("difftherm")


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    output_dir: Path
    scenarios: dict = field(default_factory=dict)
    components_path: Path | None = None
    log_level: str = "INFO"


def load_config(path: str | Path) -> RunConfig:
    """Parse a TOML run config; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: {exc}") from None
    base = path.parent
    comp = doc.get("components")
    comp_path = None
    if comp is not None:
        comp_path = (base / comp) if not Path(comp).is_absolute() else Path(comp)
        if not comp_path.is_file():
            raise CliError(f"components file not found: {comp_path}")
    out = Path(doc.get("output_dir", "results"))
    if not out.is_absolute():
        out = base / out
    scenarios = {}
    for sid, table in doc.get("scenario", {}).items():
        try:
            scenarios[sid] = Scenario.from_mapping(sid, table)
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"scenario {sid!r}: {exc}") from None
    return RunConfig(out, scenarios, comp_path, str(doc.get("log_level", "INFO")).upper())


def _make_eos(components_path, kij_text: str | None = None) -> SRK:
    try:
        comps = load_components(components_path) if components_path else default_components()
        kij = parse_kij(kij_text, [c.name for c in comps]) if kij_text else None
        return SRK(comps, kij)
    except ComponentDataError as exc:
        raise CliError(str(exc)) from None


def parse_kij(text: str, names: list[str]) -> BinarySet:
    """``"methane:ethane=0.02,1:3=0.01"``; species by name or 0-based index."""

    def index(tok):
        tok = tok.strip()
        if tok in names:
            return names.index(tok)
        try:
            i = int(tok)
        except ValueError:
            raise CliError(f"unknown species {tok!r} in --kij") from None
        if not 0 <= i < len(names):
            raise CliError(f"species index {i} out of range in --kij")
        return i

    pairs = {}
    for item in filter(None, (t.strip() for t in text.split(","))):
        try:
            lhs, val = item.split("=")
            a, b = lhs.split(":")
            pairs[(index(a), index(b))] = float(val)
        except ValueError:
            raise CliError(f"--kij entries look like 'a:b=value', got {item!r}") from None
    return BinarySet.from_pairs(len(names), pairs)


def parse_feed(text: str, n: int, normalize: bool) -> tuple:
    try:
        z = [float(v) for v in text.split(",")]
    except ValueError:
        raise CliError(f"feed must be comma-separated numbers, got {text!r}") from None
    if len(z) != n:
        raise CliError(f"feed has {len(z)} mole fractions but there are {n} components")
    if any(not math.isfinite(v) or v < 0 for v in z):
        raise CliError("feed mole fractions must be finite and non-negative")
    s = math.fsum(z)
    if s <= 0:
        raise CliError("feed mole fractions sum to zero")
    if abs(s - 1.0) > FEED_SUM_TOL and not normalize:
        raise CliError(f"feed sums to {s:.12g}, not 1; pass --normalize to rescale it")
    return tuple(v / s for v in z)


def _options(args) -> SolverOptions:
    opts = SolverOptions()
    for name in ("rr_tol", "k_tol", "pv_tol", "ph_rtol", "max_outer", "max_inner", "t_lo", "t_hi"):
        v = getattr(args, name)
        if v is not None:
            setattr(opts, name, v)
    return opts


def cmd_flash(args) -> int:
    eos = _make_eos(args.components, args.kij)
    z = parse_feed(args.feed, eos.n, args.normalize)
    P = args.pressure_bar * 1e5
    if args.mode == "fd":
        if args.fd_step is None:
            raise CliError("--mode fd needs --fd-step")
        mode = DerivativeMode("fd", args.fd_step)
    else:
        if args.fd_step is not None:
            raise CliError("--fd-step only applies with --mode fd")
        mode = DerivativeMode("ad")
    opts = _options(args)
    kind = args.kind.upper()
    kw = {"mode": mode}
    if kind == "PT":
        kw["T"] = _require(args.temperature_k, "--temperature-k")
    elif kind == "PV":
        kw["V"] = _require(args.vapor_fraction, "--vapor-fraction")
        kw["T_guess"] = args.t_guess
    else:
        if (args.enthalpy is None) == (args.feed_temperature_k is None):
            raise CliError("PH flash needs exactly one of --enthalpy or --feed-temperature-k")
        H = args.enthalpy
        if H is None:
            H = feed_enthalpy(eos, args.feed_temperature_k, P, z, opts)
        kw.update(H=H, Q=args.duty, T_guess=args.t_guess)
    try:
        spec = FlashSpec(kind, z, P, **kw)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    res = flash(eos, spec, opts)
    doc = res.to_dict()
    doc["components"] = eos.names
    print(json.dumps(doc, indent=2, allow_nan=False, default=float))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _require(v, flag):
    if v is None:
        raise CliError(f"missing {flag}")
    return v


def _summary_lines(rep: RunReport) -> list[str]:
    s = rep.summary
    lines = [f"{rep.scenario_id} ({rep.kind}): {len(rep.records)} records"]
    if rep.kind == "curve":
        for var, modes in s.items():
            for mode, d in modes.items():
                sm = " ".join(
                    f"{sp}={e['smoothness']:.4g}" if e["smoothness"] is not None else f"{sp}=n/a"
                    for sp, e in d["species"].items()
                )
                lines.append(f"  d/d{var} {mode:>10}  smoothness {sm}")
    elif rep.kind == "distribution":
        for mode, d in s["modes"].items():
            var = d["variance"]
            lines.append(
                f"  {mode:>10}  variance {var if var is None else format(var, '.4g')}"
                f"  non-finite {d['non_finite']}  outliers {d['outliers']}  failed {d['failed']}"
            )
    elif rep.kind == "iterations":
        for kind, d in s.items():
            for mode, m in d["modes"].items():
                lines.append(
                    f"  {kind} {mode:>10}  converged {m['converged']}/{m['instances']}"
                    f"  median iterations {m['median_iterations']}"
                )
    else:
        for var, d in s.items():
            for sp, e in d.items():
                lines.append(f"  d/d{var} {sp:>10}  best step {e.get('best_step')}"
                             f"  interior minimum {e.get('interior_minimum')}")
    return lines


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    logging.getLogger("difftherm").setLevel(args.log_level or cfg.log_level)
    if args.scenario not in cfg.scenarios:
        raise CliError(f"unknown scenario {args.scenario!r}; known: {sorted(cfg.scenarios)}")
    out = Path(args.output_dir) if args.output_dir else cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from None
    eos = _make_eos(cfg.components_path)
    sc = cfg.scenarios[args.scenario]
    log.info("running %s (%s)", sc.id, sc.kind)
    rep = run_scenario(sc, eos)
    try:
        paths = rep.write(out)
    except OSError as exc:
        raise CliError(f"cannot write reports to {out}: {exc}") from None
    for line in _summary_lines(rep):
        print(line)
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="difftherm", description="SRK flash calculations with AD derivatives")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("flash", help="run one flash and print the result as JSON")
    f.add_argument("kind", choices=["pt", "pv", "ph"])
    f.add_argument("--feed", required=True, help="comma-separated mole fractions")
    f.add_argument("--pressure-bar", type=float, required=True)
    f.add_argument("--temperature-k", type=float)
    f.add_argument("--vapor-fraction", type=float)
    f.add_argument("--enthalpy", type=float, help="feed enthalpy H_mix, J/mol")
    f.add_argument("--feed-temperature-k", type=float, help="compute H_mix from a PT flash at this T")
    f.add_argument("--duty", type=float, default=0.0, help="heat duty Q, J/mol of feed")
    f.add_argument("--t-guess", type=float)
    f.add_argument("--mode", choices=["ad", "fd"], default="ad")
    f.add_argument("--fd-step", type=float)
    f.add_argument("--normalize", action="store_true", help="rescale the feed to sum to 1")
    f.add_argument("--components", type=Path, help="component TOML file")
    f.add_argument("--kij", help="binary interaction overrides, e.g. methane:ethane=0.02")
    for name, typ in (("rr-tol", float), ("k-tol", float), ("pv-tol", float), ("ph-rtol", float),
                      ("max-outer", int), ("max-inner", int), ("t-lo", float), ("t-hi", float)):
        f.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    f.set_defaults(func=cmd_flash)

    e = sub.add_parser("experiment", help="run a named scenario from a config file")
    e.add_argument("--config", required=True, type=Path)
    e.add_argument("--scenario", required=True)
    e.add_argument("--output-dir", type=Path)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which would read as "not converged"
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=args.log_level or "WARNING", format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, FlashError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

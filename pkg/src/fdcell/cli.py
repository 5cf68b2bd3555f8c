"""Command-line front end: config parsing, runs, sweeps, comparisons.

Exit codes: 0 success; 1 runtime failure (placement, solver, I/O during
a run); 2 missing config file; 3 config schema violation (unknown key,
unparsable value, bad flag combination); 4 out-of-range config value.
Codes 2-4 are all configuration failures, kept distinct so scripts can
tell what to fix.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, PlacementError, SolverError
from .sim import (
    VARIANTS,
    RunConfig,
    aggregate,
    config_dict,
    persist,
    run_variant,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_MISSING_FILE = 2
EXIT_SCHEMA = 3
EXIT_RANGE = 4

DEFAULT_SWEEP = (75.0, 85.0, 95.0, 105.0, None)

# which run each variant's gain is measured against
BASELINE_OF = {
    "HD": None,
    "RR_HD": None,
    "FD": "HD",
    "FD_FDUE": "HD",
    "FD_EnergyAware": "HD",
    "RR_FD": "RR_HD",
}


class SchemaError(ConfigError):
    """Unknown key or unparsable value."""


class RangeError(ConfigError):
    """Well-formed value outside the permitted range."""


@dataclass
class ExperimentSpec:
    base: RunConfig
    sweep_cancellation: tuple = DEFAULT_SWEEP
    variants: tuple = ("HD", "FD")
    output_dir: str = "runs"


def parse_cancellation(token: str):
    t = token.strip().lower()
    if t in ("inf", "infinite", "none", "perfect"):
        return None
    try:
        v = float(t)
    except ValueError as e:
        raise SchemaError(f"cannot parse cancellation value {token!r}") from e
    if v < 0:
        raise RangeError(f"cancellation must be non-negative dB, got {v}")
    return v


def _parse_int(key, raw, lo=None):
    try:
        v = int(raw)
    except ValueError as e:
        raise SchemaError(f"{key} expects an integer, got {raw!r}") from e
    if lo is not None and v < lo:
        raise RangeError(f"{key} must be >= {lo}, got {v}")
    return v


def _parse_float(key, raw, lo=None, hi=None):
    try:
        v = float(raw)
    except ValueError as e:
        raise SchemaError(f"{key} expects a number, got {raw!r}") from e
    if lo is not None and v < lo or hi is not None and v > hi:
        raise RangeError(f"{key} out of range: {v}")
    return v


def apply_key(spec: ExperimentSpec, key: str, raw: str) -> ExperimentSpec:
    """One `key = value` assignment of the documented schema."""
    b = spec.base
    if key == "scenario":
        spec.base = replace(b, scenario=raw.strip())
    elif key == "variant":
        spec.base = replace(b, variant=raw.strip())
    elif key == "variants":
        vs = tuple(v.strip() for v in raw.split(",") if v.strip())
        if not vs:
            raise SchemaError("variants list is empty")
        for v in vs:
            if v not in VARIANTS:
                raise SchemaError(f"unknown variant {v!r}")
        spec.variants = vs
    elif key == "cancellation":
        vals = tuple(parse_cancellation(t) for t in raw.split(",") if t.strip())
        if not vals:
            raise SchemaError("cancellation list is empty")
        spec.sweep_cancellation = vals
        spec.base = replace(spec.base, cancellation_db=vals[0])
    elif key == "slots":
        spec.base = replace(b, slots=_parse_int(key, raw, lo=1))
    elif key == "drops":
        spec.base = replace(b, drops=_parse_int(key, raw, lo=1))
    elif key == "seed":
        spec.base = replace(b, seed=_parse_int(key, raw))
    elif key == "ues_per_cell":
        spec.base = replace(b, ues_per_cell=_parse_int(key, raw, lo=1))
    elif key == "bandwidth_hz":
        spec.base = replace(b, bandwidth_hz=_parse_float(key, raw, lo=1e3))
    elif key == "beta":
        spec.base = replace(b, beta=_parse_float(key, raw))
    elif key == "bs_power_dbm":
        spec.base = replace(b, bs_power_dbm=_parse_float(key, raw, lo=0.0, hi=60.0))
    elif key == "ue_power_dbm":
        spec.base = replace(b, ue_power_dbm=_parse_float(key, raw, lo=0.0, hi=60.0))
    elif key == "energy_kappa":
        spec.base = replace(b, energy_kappa=_parse_float(key, raw, lo=0.0))
    elif key == "out":
        spec.output_dir = raw.strip()
    else:
        raise SchemaError(f"unknown config key {key!r}")
    return spec


def parse_config(path: str) -> ExperimentSpec:
    """Read a `key = value` config file; empty file means all defaults."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    spec = ExperimentSpec(base=RunConfig())
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = line.split("=", 1)
            try:
                spec = apply_key(spec, key.strip(), raw)
            except ConfigError as e:
                raise type(e)(f"{path}:{lineno}: {e}") from e
    _validate_spec(spec)
    return spec


def _validate_spec(spec: ExperimentSpec) -> None:
    try:
        spec.base = spec.base.validated()
    except ConfigError as e:
        raise RangeError(str(e)) from e
    if not 0 < spec.base.beta < 1:
        raise RangeError(f"beta must be in (0, 1), got {spec.base.beta}")


PRESETS = {
    # indoor throughput-gain grid and its mode-share companion
    "table2": dict(scenario="Indoor", variants=("HD", "FD"), sweep=DEFAULT_SWEEP),
    "table4": dict(scenario="Indoor", variants=("HD", "FD"), sweep=DEFAULT_SWEEP),
    # indoor energy-efficiency grid including the mitigation variants
    "table5": dict(
        scenario="Indoor",
        variants=("HD", "FD", "FD_FDUE", "FD_EnergyAware"),
        sweep=DEFAULT_SWEEP,
    ),
    # outdoor throughput and energy grids
    "table7": dict(scenario="Outdoor", variants=("HD", "FD"), sweep=DEFAULT_SWEEP),
    "table9": dict(scenario="Outdoor", variants=("HD", "FD"), sweep=DEFAULT_SWEEP),
}


def apply_preset(spec: ExperimentSpec, name: str) -> ExperimentSpec:
    if name not in PRESETS:
        raise SchemaError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    spec.base = replace(spec.base, scenario=p["scenario"])
    spec.variants = p["variants"]
    spec.sweep_cancellation = p["sweep"]
    return spec


def _spec_from_args(args) -> ExperimentSpec:
    """defaults < preset < config file < command-line flags."""
    spec = ExperimentSpec(base=RunConfig())
    if args.preset:
        spec = apply_preset(spec, args.preset)
    if args.config:
        file_spec = parse_config(args.config)
        file_spec.variants = spec.variants if args.preset else file_spec.variants
        if args.preset:
            file_spec.sweep_cancellation = spec.sweep_cancellation
            file_spec.base = replace(file_spec.base, scenario=spec.base.scenario)
        spec = file_spec
    for key in ("scenario", "variant", "slots", "drops", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            spec = apply_key(spec, key, str(v))
    if getattr(args, "cancellation", None) is not None:
        spec = apply_key(spec, "cancellation", args.cancellation)
    if getattr(args, "out", None) is not None:
        spec.output_dir = args.out
    if spec.base.seed == 0 and os.environ.get("FDCELL_SEED"):
        spec.base = replace(spec.base, seed=_parse_int("FDCELL_SEED", os.environ["FDCELL_SEED"]))
    _validate_spec(spec)
    return spec


def _canc_label(c) -> str:
    return "Inf" if c is None else f"{c:g}"


def cmd_run(spec: ExperimentSpec, jobs: int = 1) -> int:
    cfg = spec.base.validated()
    results = run_variant(cfg, jobs=jobs)
    metrics = aggregate(cfg, results)
    persist(metrics, spec.output_dir, config=config_dict(cfg))
    m = metrics
    print(f"{cfg.scenario} {cfg.variant}@{_canc_label(cfg.cancellation_db)}: "
          f"DL {m.dl.mean_tput_bps / 1e6:.2f} Mbps, UL {m.ul.mean_tput_bps / 1e6:.2f} Mbps, "
          f"modes FD/HD/idle {m.frac_fd:.2f}/{m.frac_hd:.2f}/{m.frac_idle:.2f}")
    print(f"wrote {spec.output_dir}/metrics.csv")
    return EXIT_OK


def cmd_sweep(spec: ExperimentSpec, jobs: int = 1) -> int:
    """Variant x cancellation grid with gains against the matching baseline."""
    runs = {}      # (variant, canc) -> drop results
    grid = []
    for variant in spec.variants:
        cancs = [None] if variant in ("HD", "RR_HD") else list(spec.sweep_cancellation)
        for canc in cancs:
            grid.append((variant, canc))
    # baselines first so gains can be computed in one pass
    grid.sort(key=lambda vc: 0 if BASELINE_OF[vc[0]] is None else 1)
    all_metrics = []
    for variant, canc in grid:
        cfg = replace(spec.base, variant=variant, cancellation_db=canc).validated()
        results = run_variant(cfg, jobs=jobs)
        runs[(variant, canc)] = results
        base_name = BASELINE_OF[variant]
        baseline = runs.get((base_name, None)) if base_name else None
        m = aggregate(cfg, results, baseline)
        all_metrics.append(m)
        sub = os.path.join(spec.output_dir, f"{variant}_{_canc_label(canc)}")
        persist(m, sub, config=config_dict(cfg))
    persist(all_metrics, spec.output_dir, config=config_dict(spec.base))

    print(f"{spec.base.scenario} sweep, {spec.base.drops} drops x {spec.base.slots} slots")
    header = "variant          " + "".join(f"{_canc_label(c):>10}" for c in spec.sweep_cancellation)
    print(header)
    for variant in spec.variants:
        if BASELINE_OF[variant] is None:
            continue
        for direction in ("dl", "ul"):
            cells = []
            for canc in spec.sweep_cancellation:
                m = next((x for x in all_metrics if x.variant == variant and x.cancellation_db == canc), None)
                d = getattr(m, direction) if m else None
                cells.append(f"{d.gain_pct:9.1f}%" if d and d.gain_pct is not None else "        -")
            print(f"{variant:<12} {direction.upper():>3} " + "".join(cells))
    print(f"wrote {spec.output_dir}/metrics.csv")
    return EXIT_OK


def _read_cdf_rates(run_dir: str):
    """Per-UE rates from the cdf_*.csv files under one run directory."""
    out = {}
    for name in sorted(os.listdir(run_dir)):
        if not (name.startswith("cdf_") and name.endswith(".csv")):
            continue
        dl, ul = [], []
        with open(os.path.join(run_dir, name)) as f:
            for row in csv.DictReader(f):
                dl.append(float(row["dl_bps"]))
                ul.append(float(row["ul_bps"]))
        out[name[4:-4]] = (np.array(dl), np.array(ul))
    if not out:
        raise FileNotFoundError(f"no cdf_*.csv files in {run_dir}")
    return out


def cmd_compare(fd_dir: str, hd_dir: str) -> int:
    """Recompute gains from persisted per-UE rates, without rerunning."""
    fd = _read_cdf_rates(fd_dir)
    hd = _read_cdf_rates(hd_dir)
    base = next(iter(hd.values()))
    for name, (dl, ul) in sorted(fd.items()):
        gain_dl = (dl.mean() / base[0].mean() - 1.0) * 100.0
        gain_ul = (ul.mean() / base[1].mean() - 1.0) * 100.0
        print(f"{name}: DL gain {gain_dl:+.1f}%  UL gain {gain_ul:+.1f}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fdcell",
        description="Multi-cell full-duplex scheduling simulator",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--preset", help="|".join(sorted(PRESETS)))
        p.add_argument("--scenario", choices=("Indoor", "Outdoor"))
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--cancellation", help="dB value, comma list, or 'inf'")
        p.add_argument("--slots", type=int)
        p.add_argument("--drops", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel drops")

    p_run = sub.add_parser("run", help="simulate one variant")
    add_common(p_run)
    p_sweep = sub.add_parser("sweep", help="variant x cancellation grid")
    add_common(p_sweep)
    p_cmp = sub.add_parser("compare", help="recompute gains from saved runs")
    p_cmp.add_argument("fd_dir")
    p_cmp.add_argument("hd_dir")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.fd_dir, args.hd_dir)
        spec = _spec_from_args(args)
        if args.command == "run":
            return cmd_run(spec, jobs=args.jobs)
        return cmd_sweep(spec, jobs=args.jobs)
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except RangeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RANGE
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (PlacementError, SolverError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

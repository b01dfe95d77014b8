"""
Command-line interface.

    spinkapitza simulate   --model driven1d --a 0.5 --gamma-ratio 200 --theta0 0.05
    spinkapitza potential  --a 0.01 --a 0.1 --svg fig1.svg
    spinkapitza equilibria --a 0.72
    spinkapitza sweep      --a 0.5 1.0 1.8 2.2 3.0 --gamma-ratio 200 --parallel 4
    spinkapitza physical   --B 0.35 10
    spinkapitza verify     [--only A1 ...]

Every subcommand also takes ``--out DIR`` and ``--config FILE`` (a JSON
object whose keys are option names, e.g. ``"gamma_ratio"``; command-line
flags override it). Durations are given in slow periods.

Exit codes: 0 success, 2 configuration error, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    StabilityProbe,
    classify_equilibria,
    potential_curve,
    slow_period,
    sweep_stability,
)
from .integrate import ADAPTIVE, FIXED_RK4, ConfigurationError, IntegratorConfig, integrate
from .model import (
    DimensionlessSpec,
    InvalidParametersError,
    ModelVariant,
    SpinState,
    from_dimensionless,
)
from .svg import line_plot

EXIT_OK, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3

TRAJECTORY_HEADER = ("t", "theta", "theta_dot", "phi", "phi_dot")

SHARED_DEFAULTS = {"out": ".", "config": None, "seedless": False, "parallel": 1}

DEFAULTS = {
    "simulate": {
        "model": "driven1d", "a": 0.18, "gamma_ratio": 200.0, "lambda_l": 0.0, "phase": 0.0,
        "theta0": 0.05, "theta_dot0": 0.0, "phi0": 0.0, "phi_dot0": 0.0,
        "slow_periods": 20.0, "method": FIXED_RK4, "dt": 1.0, "rtol": 1e-9, "atol": 1e-12,
        "stride": None, "sample_dt": None, "min_steps": 40,
    },
    "potential": {"a": [0.01, 0.1], "lambda_l": 0.0, "n": 721, "svg": None},
    "equilibria": {"a": 0.02, "gamma_ratio": 200.0, "lambda_l": 0.0},
    "sweep": {
        "a": [0.5, 1.0, 1.8, 2.2, 3.0], "gamma_ratio": [200.0], "lambda_l": [0.0],
        "theta_eq": 0.0, "offset": 0.05, "limit": 0.5, "horizon_slow_periods": 100.0,
    },
    "physical": {"B": [0.35, 10.0], "gamma_ratio_cap": 200.0},
    "verify": {"only": None},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument parsing

def _shared_parser() -> argparse.ArgumentParser:
    sp = argparse.ArgumentParser(add_help=False)
    sp.add_argument("--out", help="output directory (default: .)")
    sp.add_argument("--config", help="JSON config file; flags override it")
    sp.add_argument("--seedless", action="store_const", const=True,
                    help="accepted for compatibility; the tool uses no RNG")
    sp.add_argument("--parallel", type=int, help="worker processes for sweeps")
    return sp


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_parser()
    parser = argparse.ArgumentParser(prog="spinkapitza", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[shared], help="integrate one trajectory to CSV")
    p.add_argument("--model", choices=[v.value for v in ModelVariant])
    p.add_argument("--a", type=float)
    p.add_argument("--gamma-ratio", type=float)
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--phase", type=float, help="drive phase, rad")
    p.add_argument("--theta0", type=float)
    p.add_argument("--theta-dot0", type=float)
    p.add_argument("--phi0", type=float)
    p.add_argument("--phi-dot0", type=float)
    p.add_argument("--slow-periods", type=float)
    p.add_argument("--method", choices=[FIXED_RK4, ADAPTIVE])
    p.add_argument("--dt", type=float, help="step (upper bound) in units of 1/Omega")
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--stride", type=int, help="keep every k-th step")
    p.add_argument("--sample-dt", type=float, help="resample interval")
    p.add_argument("--min-steps", type=int, help="minimum steps per drive period")

    p = sub.add_parser("potential", parents=[shared], help="effective potential curves")
    p.add_argument("--a", type=float, action="extend", nargs="+")
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--svg", help="SVG file name (inside --out)")

    p = sub.add_parser("equilibria", parents=[shared], help="stability report JSON")
    p.add_argument("--a", type=float)
    p.add_argument("--gamma-ratio", type=float)
    p.add_argument("--lambda-l", type=float)

    p = sub.add_parser("sweep", parents=[shared], help="analytic vs empirical stability grid")
    p.add_argument("--a", type=float, action="extend", nargs="+")
    p.add_argument("--gamma-ratio", type=float, action="extend", nargs="+")
    p.add_argument("--lambda-l", type=float, action="extend", nargs="+")
    p.add_argument("--theta-eq", type=float)
    p.add_argument("--offset", type=float)
    p.add_argument("--limit", type=float)
    p.add_argument("--horizon-slow-periods", type=float)

    p = sub.add_parser("physical", parents=[shared], help="electron-scale parameter report")
    p.add_argument("--B", type=float, action="extend", nargs="+", help="applied fields, T")
    p.add_argument("--gamma-ratio-cap", type=float)

    p = sub.add_parser("verify", parents=[shared], help="run the acceptance criteria")
    p.add_argument("--only", action="extend", nargs="+")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    command = args.command
    cfg = dict(SHARED_DEFAULTS)
    cfg.update(DEFAULTS[command])
    allowed = set(cfg)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in allowed and value is not None:
            cfg[key] = value
    cfg.pop("config", None)
    return cfg


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def validate(command: str, cfg: dict) -> dict:
    """Build and check every object the command needs before any compute."""
    _require(isinstance(cfg["parallel"], int) and cfg["parallel"] >= 1, "--parallel must be >= 1")
    built = {}
    try:
        if command == "simulate":
            variant = ModelVariant(cfg["model"])
            spec = DimensionlessSpec(cfg["a"], cfg["gamma_ratio"], cfg["lambda_l"], cfg["phase"])
            p = from_dimensionless(spec)
            if variant.is_planar:
                _require(spec.lambda_L == 0, f"model {variant.value} is planar: --lambda-l must be 0")
            _require(cfg["slow_periods"] > 0, "--slow-periods must be > 0")
            period = slow_period(p)
            _require(math.isfinite(period), "no slow timescale for this spec")
            icfg = IntegratorConfig(
                t_end=cfg["slow_periods"] * period, dt=cfg["dt"], method=cfg["method"],
                rel_tol=cfg["rtol"], abs_tol=cfg["atol"], sample_stride=cfg["stride"],
                sample_dt=cfg["sample_dt"], min_steps_per_drive_period=cfg["min_steps"])
            initial = SpinState(cfg["theta0"], cfg["theta_dot0"], cfg["phi0"], cfg["phi_dot0"])
            _require(all(math.isfinite(v) for v in initial), "initial state must be finite")
            built.update(variant=variant, params=p, icfg=icfg, initial=initial, period=period)
        elif command == "potential":
            a_values = _as_list(cfg["a"])
            _require(len(a_values) >= 1, "--a needs at least one value")
            _require(int(cfg["n"]) >= 3, "--n must be >= 3")
            built["specs"] = [DimensionlessSpec(a, 1.0, cfg["lambda_l"]) for a in a_values]
        elif command == "equilibria":
            built["spec"] = DimensionlessSpec(cfg["a"], cfg["gamma_ratio"], cfg["lambda_l"])
        elif command == "sweep":
            grids = [_as_list(cfg[k]) for k in ("a", "gamma_ratio", "lambda_l")]
            _require(all(grids), "sweep grids must be non-empty")
            for a in grids[0]:
                for g in grids[1]:
                    for lam in grids[2]:
                        DimensionlessSpec(a, g, lam)
            _require(cfg["limit"] > 0 and cfg["horizon_slow_periods"] > 0,
                     "--limit and --horizon-slow-periods must be > 0")
            built["grids"] = grids
            built["probe"] = StabilityProbe(theta_eq=cfg["theta_eq"], offset=cfg["offset"],
                                            excursion_limit=cfg["limit"],
                                            horizon_slow_periods=cfg["horizon_slow_periods"])
        elif command == "physical":
            fields = _as_list(cfg["B"])
            _require(len(fields) >= 1 and all(b > 0 for b in fields), "--B values must be > 0")
            _require(50 <= cfg["gamma_ratio_cap"] <= 1e4, "--gamma-ratio-cap must lie in [50, 1e4]")
            built["fields"] = fields
        elif command == "verify":
            from .acceptance import criterion_ids

            only = _as_list(cfg["only"]) if cfg["only"] else None
            if only:
                unknown = [c for c in only if c not in criterion_ids()]
                _require(not unknown, f"unknown criteria: {', '.join(unknown)}")
            built["only"] = only
    except (InvalidParametersError, ConfigurationError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return built


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v) -> str:
    return format(float(v), ".17g")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(times, states) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRAJECTORY_HEADER) + "\n")
    for t, row in zip(times, states):
        buf.write(",".join([_fmt(t)] + [_fmt(v) for v in row]) + "\n")
    return buf.getvalue()


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = np.array([[float(v) for v in r] for r in reader], dtype=float)
    return rows[:, 0], rows[:, 1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def run_id(command: str, cfg: dict) -> str:
    echo = {k: v for k, v in cfg.items() if k not in ("out", "parallel")}
    blob = json.dumps(_jsonable({"command": command, "config": echo}), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, outputs: list[str], started: float,
                   **extra) -> Path:
    manifest = {
        "run_id": run_id(command, cfg),
        "tool_version": __version__,
        "command": command,
        "config": cfg,
        "outputs": outputs,
        "wall_clock_seconds": time.perf_counter() - started,
    }
    manifest.update(extra)
    path = out / f"{command}_manifest.json"
    _atomic_write(path, _dump_json(manifest))
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg: dict, built: dict, out: Path, started: float) -> int:
    traj = integrate(built["variant"], built["initial"], built["params"], built["icfg"])
    _atomic_write(out / "trajectory.csv", trajectory_csv(traj.times, traj.states))
    div = traj.divergence
    write_manifest(out, "simulate", cfg, ["trajectory.csv"], started,
                   diverged_at=None if div is None else div.time,
                   divergence_reason=None if div is None else div.reason,
                   dt=traj.dt, n_samples=len(traj), slow_period=built["period"])
    print(f"wrote {out / 'trajectory.csv'} ({len(traj)} samples)")
    if div is not None:
        print(f"run diverged at t={div.time:.6g} ({div.reason})")
    return EXIT_OK


def cmd_potential(cfg: dict, built: dict, out: Path, started: float) -> int:
    outputs, series = [], []
    for spec in built["specs"]:
        curve = potential_curve(spec, int(cfg["n"]))
        name = f"potential_a{spec.a:g}.csv"
        lines = ["theta,u"] + [f"{_fmt(t)},{_fmt(u)}" for t, u in zip(curve.thetas, curve.u_values)]
        _atomic_write(out / name, "\n".join(lines) + "\n")
        outputs.append(name)
        series.append((f"a = {spec.a:g}", curve.thetas, curve.u_values))
    if cfg["svg"]:
        ticks = [(-math.pi, "-π"), (-math.pi / 2, "-π/2"), (0.0, "0"),
                 (math.pi / 2, "π/2"), (math.pi, "π")]
        svg = line_plot(series, xlabel="θ", ylabel="U_eff = a cos θ + (1 - λ²) sin² θ",
                        title="Effective potential", xticks=ticks)
        _atomic_write(out / cfg["svg"], svg)
        outputs.append(cfg["svg"])
    write_manifest(out, "potential", cfg, outputs, started)
    print("wrote " + ", ".join(outputs))
    return EXIT_OK


def cmd_equilibria(cfg: dict, built: dict, out: Path, started: float) -> int:
    p = from_dimensionless(built["spec"])
    report = classify_equilibria(p).to_dict()
    report["params"] = asdict(p)
    report["spec"] = asdict(built["spec"])
    text = _dump_json(report)
    _atomic_write(out / "equilibria.json", text)
    write_manifest(out, "equilibria", cfg, ["equilibria.json"], started)
    sys.stdout.write(text)
    return EXIT_OK


SWEEP_COLUMNS = ("index", "a", "gamma_ratio", "lambda_L", "analytic", "empirical_bounded",
                 "agreement", "max_excursion", "t_exceeded", "horizon", "error")


def sweep_csv(cells) -> str:
    def cell_value(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, float):
            return _fmt(v)
        return str(v)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for c in cells:
        row = {**asdict(c), "agreement": c.agreement}
        writer.writerow([cell_value(row[k]) for k in SWEEP_COLUMNS])
    return buf.getvalue()


def cmd_sweep(cfg: dict, built: dict, out: Path, started: float) -> int:
    a_grid, g_grid, l_grid = built["grids"]
    cells = sweep_stability(a_grid, g_grid, l_grid, built["probe"], parallel=cfg["parallel"])
    _atomic_write(out / "sweep.csv", sweep_csv(cells))
    compared = [c for c in cells if c.agreement is not None]
    summary = {
        "cells": len(cells),
        "compared": len(compared),
        "disagreements": sum(1 for c in compared if not c.agreement),
        "errors": sum(1 for c in cells if c.error),
        "disagreeing_cells": [c.index for c in compared if not c.agreement],
    }
    _atomic_write(out / "sweep_summary.json", _dump_json(summary))
    write_manifest(out, "sweep", cfg, ["sweep.csv", "sweep_summary.json"], started)
    print(f"{summary['cells']} cells, {summary['disagreements']} disagreements")
    return EXIT_OK


def cmd_physical(cfg: dict, built: dict, out: Path, started: float) -> int:
    from .physics import PhysicalConstants, physical_report

    report = physical_report(PhysicalConstants.codata(), built["fields"], cfg["gamma_ratio_cap"])
    text = _dump_json(report)
    _atomic_write(out / "physical.json", text)
    write_manifest(out, "physical", cfg, ["physical.json"], started)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(cfg: dict, built: dict, out: Path, started: float) -> int:
    from .acceptance import run_all

    results = run_all(built["only"], parallel=cfg["parallel"])
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    payload = {"passed": ok, "criteria": [r.to_dict() for r in results]}
    _atomic_write(out / "acceptance.json", _dump_json(payload))
    write_manifest(out, "verify", cfg, ["acceptance.json"], started)
    print("ALL PASS" if ok else "FAILED: " + ", ".join(r.id for r in results if not r.passed))
    return EXIT_OK if ok else EXIT_ACCEPTANCE


COMMANDS = {
    "simulate": cmd_simulate,
    "potential": cmd_potential,
    "equilibria": cmd_equilibria,
    "sweep": cmd_sweep,
    "physical": cmd_physical,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = resolve_config(args)
        built = validate(args.command, cfg)
    except ConfigError as exc:
        print(f"spinkapitza {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, built, out, started)


if __name__ == "__main__":
    sys.exit(main())

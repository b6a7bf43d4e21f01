"""Command-line runner.

    secure-uav validate <cfg>
    secure-uav run <cfg> --algo proposed|baseline --out <dir> [--seed S] [--workers W]
    secure-uav sweep <cfg> --radii 100,200,300,400 --ppeak 0.01,1.0 --out <dir> [--workers W]
    secure-uav export-traj <report.json> --out <file.csv>

``SECURE_UAV_CONFIG`` replaces the config path given on the command line.
Exit status: 0 success, 2 invalid config/scenario, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import report as rp
from .alternate import ScenarioError, SolverError, alternate_optimize, baseline_straight_line
from .config import ConfigError, load_config_with_extras
from .convex import BarrierError
from .oracles import audit_constraints, sampled_robust_check
from .traj import TrajectoryError

log = logging.getLogger("secure_uav_ee")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
CONFIG_ENV = "SECURE_UAV_CONFIG"
SOLVER_ERRORS = (SolverError, TrajectoryError, BarrierError, FloatingPointError, ArithmeticError,
                 RuntimeError)


def _config_path(arg):
    return os.environ.get(CONFIG_ENV) or arg


def execute(scenario, algorithm: str, seed: int = 0, samples: int = 10_000) -> rp.RunReport:
    """Run one algorithm and attach the oracle summaries; solver errors are captured in the report."""
    rep = rp.RunReport(algorithm, scenario, seed=seed)
    try:
        if algorithm == "proposed":
            sol, trace = alternate_optimize(scenario)
            rep.trace = rp.trace_rows(trace.records)
            rep.converged = trace.converged
        elif algorithm == "baseline":
            sol = baseline_straight_line(scenario)
            rep.converged = bool(sol.feasible.get("converged"))
        else:
            raise ValueError(f"unknown algorithm {algorithm!r}")
    except SOLVER_ERRORS as exc:
        rep.status = "solver_failure"
        rep.error = str(exc)
        return rep
    rep.ee = sol.ee
    rep.schedule, rep.plan = sol.schedule, sol.plan
    if not sol.feasible.get("rate_feasible", True):
        rep.status = "solver_failure"
        rep.error = "no schedule meets the minimum rate on the returned trajectory"
    robust = sampled_robust_check(sol.schedule, sol.plan, scenario, samples=samples, seed=seed)
    rep.oracles = {"robust": {"margin": robust.margin, "worst_ratio": robust.worst_ratio,
                              "violations": robust.violations, "worst_slot": robust.worst_slot},
                   "audit": audit_constraints(scenario, sol.schedule, sol.plan)}
    return rep


def _write_run(rep: rp.RunReport, out: Path, elapsed: float):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json())
    (out / "trace.csv").write_text(rp.trace_csv(rep))
    if rep.plan is not None:
        rp.export_trajectory(rep, out / "trajectory.csv")
    (out / "timing.json").write_text(json.dumps({"schema_version": rp.SCHEMA_VERSION,
                                                 "wall_time_s": elapsed}) + "\n")


def cmd_validate(args) -> int:
    sc, _ = load_config_with_extras(_config_path(args.config))
    from .model import validate_scenario
    diag = validate_scenario(sc)
    print(f"ok: K={sc.K} N_F={sc.N_F} N={sc.N} Q_E={sc.Q_E} P_peak={sc.P_peak}")
    state = "holds" if diag.secrecy_ok else "does not hold"
    print(f"rate-above-leakage check {state} (margin {diag.secrecy_margin:.4g} bit/s)")
    return EXIT_OK


def cmd_run(args) -> int:
    sc, extras = load_config_with_extras(_config_path(args.config))
    seed = args.seed if args.seed is not None else extras.get("seed", 0)
    t0 = time.perf_counter()
    rep = execute(sc, args.algo, seed=seed)
    _write_run(rep, Path(args.out), time.perf_counter() - t0)
    if not rep.ok:
        log.error("solver failure: %s", rep.error)
        return EXIT_SOLVER
    print(f"{args.algo}: EE = {rep.ee:.6g} bit/J -> {args.out}")
    return EXIT_OK


def _cell(job):
    sc, algo, seed = job
    rep = execute(sc, algo, seed=seed, samples=1000)
    return {"q_e": sc.Q_E, "p_peak": sc.P_peak, "algorithm": algo, "status": rep.status, "ee": rep.ee,
            "converged": rep.converged, "iterations": len(rep.trace) if rep.trace else 1, "error": rep.error}


def sweep_radius(scenario, radii, p_peaks, algorithms=("proposed", "baseline"), workers: int = 1, seed: int = 0):
    """EE for every (Q_E, P_peak, algorithm) cell, ordered by the input lists."""
    if not radii or not p_peaks:
        raise ValueError("radii and p_peaks must be non-empty")
    jobs = [(scenario.replace(Q_E=float(q), P_peak=float(p)), a, seed)
            for p in p_peaks for q in radii for a in algorithms]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_cell, jobs))  # map preserves submission order
    else:
        rows = [_cell(j) for j in jobs]
    return rows


def cmd_sweep(args) -> int:
    sc, extras = load_config_with_extras(_config_path(args.config))
    seed = args.seed if args.seed is not None else extras.get("seed", 0)
    radii = [float(x) for x in args.radii.split(",") if x.strip()]
    peaks = [float(x) for x in args.ppeak.split(",") if x.strip()]
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for q in radii:
        if q < 0:
            raise ConfigError(f"radius must be non-negative: {q}")
    for p in peaks:
        if not 0 < p <= sc.P_max:
            raise ConfigError(f"P_peak must lie in (0, P_max]: {p}")
    t0 = time.perf_counter()
    rows = sweep_radius(sc, radii, peaks, algos, workers=args.workers, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(rp.sweep_csv(rows))
    (out / "sweep.json").write_text(json.dumps({"schema_version": rp.SCHEMA_VERSION, "cells": rows},
                                               indent=1, sort_keys=True) + "\n")
    (out / "timing.json").write_text(json.dumps({"schema_version": rp.SCHEMA_VERSION,
                                                 "wall_time_s": time.perf_counter() - t0}) + "\n")
    failed = [r for r in rows if r["status"] != "ok"]
    for r in rows:
        ee = "failed" if r["ee"] is None else f"{r['ee']:.6g}"
        print(f"Q_E={r['q_e']:g} P_peak={r['p_peak']:g} {r['algorithm']}: {ee}")
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_export(args) -> int:
    text = Path(args.report).read_text()
    try:
        rep = rp.RunReport.from_json(text)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{args.report}: not a run report ({exc})") from exc
    if rep.plan is None:
        raise ConfigError(f"{args.report}: report holds no solution (status {rep.status})")
    path, side = rp.export_trajectory(rep, args.out)
    print(f"wrote {path} and {side}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="secure-uav", description="Energy-efficient secure UAV-OFDMA design")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="solve one scenario")
    p.add_argument("config")
    p.add_argument("--algo", choices=["proposed", "baseline"], default="proposed")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="seed for the sampled robustness check")
    p.add_argument("--workers", type=int, default=1, help="accepted for symmetry with sweep; a run is serial")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="EE versus uncertainty radius and peak power")
    p.add_argument("config")
    p.add_argument("--radii", default="100,200,300,400")
    p.add_argument("--ppeak", default="0.01,1.0")
    p.add_argument("--algos", default="proposed,baseline")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-traj", help="trajectory CSV and overlay JSON from a run report")
    p.add_argument("report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

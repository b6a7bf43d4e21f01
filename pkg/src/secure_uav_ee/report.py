"""Run reports: JSON/CSV serialisation and trajectory export.

Every file carries ``schema_version``: a top-level key in JSON, the first
column in CSV.  Reports contain no wall-clock data so identical inputs give
byte-identical files; timings go to a separate ``timing.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import scenario_from_dict, scenario_to_dict
from .model import FlightPlan, Scenario, Schedule, Solution, energy_efficiency, gains, total_power
from .oracles import _leak_cap

SCHEMA_VERSION = "1.0"

TRACE_FIELDS = ["l", "q1", "q2", "ee", "ee_candidate", "min_rate_ratio", "max_leak_ratio", "sca_iterations",
                "sca_converged", "rmin_relaxed"]
TRAJ_FIELDS = ["n", "t_x", "t_y", "v_x", "v_y", "speed", "transmit_power", "leakage_margin"]


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _unfinite(x):
    return float(x) if isinstance(x, str) else x


@dataclass
class RunReport:
    algorithm: str
    scenario: Scenario
    status: str = "ok"
    error: str | None = None
    seed: int = 0
    ee: float | None = None
    converged: bool | None = None
    trace: list = field(default_factory=list)  # list of dicts with TRACE_FIELDS
    schedule: Schedule | None = None
    plan: FlightPlan | None = None
    oracles: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "algorithm": self.algorithm,
            "status": self.status,
            "error": self.error,
            "seed": self.seed,
            "scenario": scenario_to_dict(self.scenario),
            "ee": self.ee,
            "converged": self.converged,
            "trace": [{k: _finite(v) for k, v in r.items()} for r in self.trace],
            "oracles": json.loads(json.dumps(self.oracles, default=_finite)),
        }
        if self.plan is not None:
            sc = self.scenario
            sched = self.schedule
            idx = np.argwhere((sched.alpha != 0) | (sched.p != 0))
            d["solution"] = {
                "t": self.plan.t.tolist(),
                "v": self.plan.v.tolist(),
                "schedule_entries": [[int(k), int(i), int(n), float(sched.alpha[k, i, n]), float(sched.p[k, i, n])]
                                     for k, i, n in idx],
                "slot_transmit_power": sched.ptilde.sum(axis=(0, 1)).tolist(),
                "user_rates": _user_rates(sc, sched, self.plan).tolist(),
            }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        sc = scenario_from_dict(d["scenario"])
        rep = cls(d["algorithm"], sc, d["status"], d["error"], d["seed"], d["ee"], d["converged"],
                  [{k: _unfinite(v) if k in ("min_rate_ratio", "max_leak_ratio") else v for k, v in r.items()}
                   for r in d["trace"]], oracles=d["oracles"])
        sol = d.get("solution")
        if sol is not None:
            alpha = np.zeros((sc.K, sc.N_F, sc.N))
            p = np.zeros_like(alpha)
            for k, i, n, a, pw in sol["schedule_entries"]:
                alpha[k, i, n] = a
                p[k, i, n] = pw
            rep.schedule = Schedule(alpha, p)
            rep.plan = FlightPlan(t=np.array(sol["t"], dtype=float), v=np.array(sol["v"], dtype=float))
        return rep

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def solution(self) -> Solution:
        if self.plan is None:
            raise ValueError("report has no solution")
        return Solution(self.schedule, self.plan, energy_efficiency(self.schedule, self.plan, self.scenario))


def _user_rates(sc, sched, plan):
    from .model import user_average_rates
    return user_average_rates(sc, sched, plan)


def trace_rows(trace) -> list:
    out = []
    for r in trace:
        d = dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r)
        out.append({k: d[k] for k in TRACE_FIELDS})
    return out


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", *fields])
    for r in rows:
        w.writerow([SCHEMA_VERSION, *[_fmt(r[f]) for f in fields]])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def trace_csv(report: RunReport) -> str:
    return _csv_text(TRACE_FIELDS, report.trace)


def trajectory_rows(report: RunReport) -> list:
    sc = report.scenario
    plan = report.plan
    sched = report.schedule
    tx = sched.ptilde.sum(axis=(0, 1))
    cap = _leak_cap(sc, plan.t[1:])
    pmax = np.where(sched.alpha > 0, sched.p, 0.0).max(axis=(0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        # leakage margin: Gamma_th minus worst-case leakage SNR of the strongest scheduled subcarrier
        snr = np.where(np.isfinite(cap), pmax * sc.Gamma_th / cap, 0.0)
    margin = sc.Gamma_th - snr
    rows = [{"n": 0, "t_x": float(plan.t[0, 0]), "t_y": float(plan.t[0, 1]), "v_x": None, "v_y": None,
             "speed": None, "transmit_power": None, "leakage_margin": None}]
    for n in range(sc.N):
        v = plan.v[n]
        rows.append({"n": n + 1, "t_x": float(plan.t[n + 1, 0]), "t_y": float(plan.t[n + 1, 1]),
                     "v_x": float(v[0]), "v_y": float(v[1]), "speed": float(np.hypot(*v)),
                     "transmit_power": float(tx[n]), "leakage_margin": float(margin[n])})
    return rows


def export_trajectory(report: RunReport, path) -> tuple:
    """Write the per-slot trajectory CSV plus a JSON sidecar for plot overlays.

    The sidecar sits next to ``path`` with suffix ``.json``.  Returns both paths.
    """
    if report.plan is None:
        raise ValueError("report contains no solution")
    path = Path(path)
    side = path.with_suffix(".json")
    if side == path:
        side = path.with_name(path.name + ".sidecar.json")
    sc = report.scenario
    meta = {
        "schema_version": SCHEMA_VERSION,
        "algorithm": report.algorithm,
        "user_positions": [list(p) for p in sc.user_positions],
        "eaves_estimate": list(sc.eaves_estimate),
        "Q_E": sc.Q_E,
        "t0": list(sc.t0),
        "tF": list(sc.tF),
        "ee": report.ee,
    }
    path.write_text(_csv_text(TRAJ_FIELDS, trajectory_rows(report)))
    side.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return path, side


def sweep_csv(rows) -> str:
    fields = ["q_e", "p_peak", "algorithm", "status", "ee", "converged", "iterations", "error"]
    return _csv_text(fields, rows)


def recompute_ee(report: RunReport) -> float:
    """EE from the emitted trajectory and schedule only."""
    sc = report.scenario
    h = gains(sc, report.plan)[:, None, :]
    from .model import link_rate
    rates = link_rate(report.schedule.alpha, report.schedule.ptilde, h, sc.W, sc.N0)
    return float(rates.sum() / total_power(sc, report.schedule, report.plan.v).sum())

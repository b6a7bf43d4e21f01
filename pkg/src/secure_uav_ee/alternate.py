"""Alternating optimisation of schedule and trajectory, plus the straight-line baseline."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (FlightPlan, Scenario, Schedule, Solution, energy_efficiency, straight_line_plan,
                    user_average_rates)
from .sched import dinkelbach_schedule, min_eaves_dist_sq
from .traj import TrajectoryError, sca_dinkelbach_trajectory


class ScenarioError(ValueError):
    """The scenario violates an invariant; raised before any iteration."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class SolverError(RuntimeError):
    """A sub-solver failed; ``iteration`` is the outer index at which it happened."""

    def __init__(self, message, iteration):
        super().__init__(f"outer iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class IterationRecord:
    l: int
    q1: float
    q2: float
    ee: float  # accepted (best so far) energy efficiency
    ee_candidate: float  # EE of this iteration's schedule on its new plan
    min_rate_ratio: float
    max_leak_ratio: float
    wall_time: float
    sca_iterations: int
    sca_converged: bool
    rmin_relaxed: int


@dataclass
class AlternationTrace:
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def ee(self):
        return [r.ee for r in self.records]

    @property
    def q2(self):
        return [r.q2 for r in self.records]

    def __len__(self):
        return len(self.records)


def secrecy_guarantee_check(scenario: Scenario):
    """Is ``R_min`` above the per-subcarrier leakage rate ``W log2(1 + Gamma_th)``?

    Returns ``(ok, margin)`` with the margin in bit/s.
    """
    leak = scenario.W * math.log2(1.0 + scenario.Gamma_th) if math.isfinite(scenario.Gamma_th) else math.inf
    margin = scenario.R_min - leak
    return bool(margin > 0), float(margin)


def _residuals(scenario: Scenario, schedule: Schedule, plan: FlightPlan):
    rates = user_average_rates(scenario, schedule, plan)
    rate_ratio = float(rates.min() / scenario.R_min) if scenario.R_min > 0 else math.inf
    if not math.isfinite(scenario.Gamma_th):
        return rate_ratio, 0.0
    dmin = min_eaves_dist_sq(plan.slot_positions, scenario)
    p = np.where(schedule.alpha > 0, schedule.p, 0.0).max(axis=(0, 1))
    snr = p * scenario.beta0 / (scenario.noise_power * dmin)
    leak = float((snr / scenario.Gamma_th).max()) if scenario.Gamma_th > 0 else float(np.any(p > 0))
    return rate_ratio, leak


def _check(scenario: Scenario):
    from .model import validate_scenario

    diag = validate_scenario(scenario)
    if diag.violations:
        raise ScenarioError(diag.violations)


def baseline_straight_line(scenario: Scenario) -> Solution:
    """Constant-velocity straight flight with the schedule optimised on it."""
    _check(scenario)
    plan = straight_line_plan(scenario)
    res = dinkelbach_schedule(scenario, plan)
    ee = energy_efficiency(res.schedule, plan, scenario)
    return Solution(res.schedule, plan, ee, {"rate_feasible": bool(res.rate_feasible),
                                             "converged": bool(res.converged), "q1": float(res.q1)})


def alternate_optimize(scenario: Scenario, progress=None):
    """Alternate schedule and trajectory updates from the straight line.

    Returns the best ``Solution`` seen and the per-iteration trace.  The
    trace's ``ee`` column is the accepted (best so far) value.
    """
    _check(scenario)
    sc = scenario
    eps = sc.iter.eps_tol
    plan = straight_line_plan(sc)
    trace = AlternationTrace()
    best = None
    schedule = None
    q2_prev = None
    for l in range(1, sc.iter.L_max_algo3 + 1):
        t_start = time.perf_counter()
        sres = dinkelbach_schedule(sc, plan, incumbent=schedule)
        schedule = sres.schedule
        ee_here = energy_efficiency(schedule, plan, sc)
        if best is None or ee_here > best.ee:
            best = Solution(schedule, plan, ee_here, {"rate_feasible": bool(sres.rate_feasible)})
        try:
            tres = sca_dinkelbach_trajectory(sc, schedule, plan)
        except TrajectoryError as exc:
            raise SolverError(str(exc), l) from exc
        new_plan = tres.plan
        ee_new = energy_efficiency(schedule, new_plan, sc)
        if ee_new >= best.ee:
            best = Solution(schedule, new_plan, ee_new,
                            {"rate_feasible": bool(sres.rate_feasible), "rmin_relaxed": tres.rmin_relaxed})
        if ee_new >= ee_here:
            plan = new_plan
        rate_ratio, leak = _residuals(sc, best.schedule, best.plan)
        trace.records.append(IterationRecord(l, float(sres.q1), float(tres.q2), float(best.ee), float(ee_new),
                                             rate_ratio, leak, time.perf_counter() - t_start,
                                             len(tres.state.trace), bool(tres.converged), tres.rmin_relaxed))
        if progress is not None:
            progress(trace.records[-1])
        if q2_prev is not None and abs(tres.q2 - q2_prev) < eps * abs(tres.q2):
            trace.converged = True
            break
        q2_prev = tres.q2
    best.feasible["alternation_converged"] = trace.converged
    return best, trace

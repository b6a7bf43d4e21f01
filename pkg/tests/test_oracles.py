import math

import numpy as np
import pytest

from secure_uav_ee.convex import ball_project
from secure_uav_ee.model import FlightPlan, Scenario, Schedule, energy_efficiency, flight_power, straight_line_plan
from secure_uav_ee.oracles import (BudgetExceeded, OracleBudget, audit_constraints, brute_force_schedule,
                                   finite_diff_check, sampled_robust_check)
from secure_uav_ee.sched import min_eaves_dist_sq
from secure_uav_ee.traj import rate_lower_bound

from conftest import tiny_scenario


def _single(**over):
    kw = dict(K=1, N_F=1, N=1, user_positions=((50.0, 0.0),), t0=(0.0, 0.0), tF=(20.0, 0.0),
              eaves_estimate=(900.0, 0.0), Q_E=50.0, P_peak=0.1, R_min=0.0)
    kw.update(over)
    return Scenario(**kw), FlightPlan.from_velocities((0, 0), [[10.0, 0.0]], 2.0)


def test_single_link_hits_peak_power():
    sc, plan = _single(Gamma_th=1.0)  # leakage cap far above P_peak
    ee, sched = brute_force_schedule(sc, plan, OracleBudget(grid=25))
    assert sched.p[0, 0, 0] == pytest.approx(sc.P_peak, rel=1e-12)
    # EE = W log2(1 + p h') / (p + P_C + flight) is increasing on [0, P_peak] here
    hp = sc.beta0 / (30.0 ** 2 + sc.H ** 2) / sc.noise_power
    f = lambda p: sc.W * math.log2(1 + p * hp) / (p + sc.P_C + flight_power((10.0, 0.0)))
    assert f(sc.P_peak) > f(0.9 * sc.P_peak)
    assert ee == pytest.approx(f(sc.P_peak), rel=1e-12)


def test_zero_threshold_forbids_transmission():
    sc, plan = _single(Gamma_th=0.0)
    ee, sched = brute_force_schedule(sc, plan)
    assert ee == 0.0 and np.all(sched.p == 0)


def test_symmetric_users_swap_invariant(rng):
    sc = Scenario(K=2, N_F=2, N=2, user_positions=((30.0, 40.0), (40.0, 30.0)), tF=(40.0, 40.0),
                  eaves_estimate=(-300.0, 300.0), Q_E=20.0, R_min=1.0, P_peak=0.1)
    sw = sc.replace(user_positions=sc.user_positions[::-1])
    plan = straight_line_plan(sc)
    ee1, _ = brute_force_schedule(sc, plan, OracleBudget(grid=9))
    ee2, _ = brute_force_schedule(sw, plan, OracleBudget(grid=9))
    assert ee1 == pytest.approx(ee2, rel=1e-12)


def test_budget_enforced(rng):
    sc = tiny_scenario(rng)
    with pytest.raises(BudgetExceeded):
        brute_force_schedule(sc, straight_line_plan(sc), OracleBudget(max_enum=1000))
    with pytest.raises(ValueError):
        OracleBudget(grid=0)


def test_brute_force_result_is_feasible(rng):
    sc = tiny_scenario(rng)
    plan = straight_line_plan(sc)
    ee, sched = brute_force_schedule(sc, plan, OracleBudget(grid=7))
    if sched is not None:
        assert energy_efficiency(sched, plan, sc) == pytest.approx(ee, rel=1e-12)
        audit = audit_constraints(sc, sched, plan)
        assert max(audit.values()) <= 1e-9


def test_robust_check_zero_power():
    sc = Scenario(N=20, N_F=4)
    plan = straight_line_plan(sc)
    chk = sampled_robust_check(Schedule.zeros(sc), plan, sc, samples=100)
    assert chk.margin == sc.Gamma_th and chk.violations == 0


def test_worst_point_is_ball_projection(rng):
    sc = Scenario(Q_E=150.0)
    for t in rng.uniform(-200, 1200, (50, 2)):
        w = ball_project(sc.eaves + (t - sc.eaves) * 1e6, sc.eaves, sc.Q_E)  # on the ray towards t
        if np.linalg.norm(t - sc.eaves) <= sc.Q_E:
            d2 = sc.H ** 2
        else:
            d2 = np.sum((w - t) ** 2) + sc.H ** 2
        assert d2 == pytest.approx(min_eaves_dist_sq(t, sc), rel=1e-9, abs=1e-9)


def test_robust_check_flags_violation_and_is_deterministic():
    sc = Scenario(N=20, N_F=2)
    plan = straight_line_plan(sc)
    sched = Schedule.zeros(sc)
    sched.alpha[0, 0, :] = 1.0
    sched.p[0, 0, :] = 1e-3
    a = sampled_robust_check(sched, plan, sc, samples=500, seed=4)
    b = sampled_robust_check(sched, plan, sc, samples=500, seed=4)
    assert a == b
    assert a.violations > 0 and a.margin < 0


def test_finite_diff_check_examples():
    Q = np.array([[3.0, 1.0], [1.0, 2.0]])
    pts = [np.array([0.3, -1.2]), np.array([5.0, 2.0])]
    assert finite_diff_check(lambda x: 0.5 * x @ Q @ x, lambda x: Q @ x, pts, h=1e-4) < 1e-8
    fp = lambda v: flight_power(v)
    f = Scenario().flight

    def fp_grad(v):
        s = np.linalg.norm(v)
        return (2 * f.profile_coef - f.P_i * f.v0 / s ** 3 + 3 * f.parasite_coef * s) * v

    assert finite_diff_check(fp, fp_grad, [np.array([6.0, 8.0])]) <= 1e-5
    g = lambda u: rate_lower_bound(u[0], 2e5, 3e4, 1.0, 7800.0)
    slope = -7800.0 * 3e4 / (2e5 * (2e5 + 3e4) * math.log(2))
    assert finite_diff_check(g, lambda u: np.array([slope]), [np.array([1.5e5])]) < 1e-10
    with pytest.raises(ValueError):
        finite_diff_check(g, g, [np.zeros(1)], h=0)


def test_audit_detects_violations():
    sc = Scenario(N=20, N_F=2, R_min=0.0)
    plan = straight_line_plan(sc)
    sched = Schedule.zeros(sc)
    clean = audit_constraints(sc, sched, plan)
    assert max(clean.values()) <= 1e-9
    broken = FlightPlan(t=plan.t.copy(), v=plan.v.copy())
    broken.t[-1] += 1.0
    broken.v[3] *= 1.5
    res = audit_constraints(sc, sched, broken)
    assert res["C9"] == pytest.approx(math.sqrt(2))
    assert res["C10"] > 0 and res["C12"] > 0
    sched.alpha[:, 0, 0] = 1.0
    sched.p[:, 0, 0] = 2.0
    res = audit_constraints(sc, sched, plan)
    assert res["C2"] == pytest.approx(sc.K - 1) and res["C4"] == pytest.approx(sc.K * 2.0 - sc.P_peak)
    assert res["C7_rel"] > 0

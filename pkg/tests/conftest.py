import numpy as np
import pytest

from secure_uav_ee.model import IterParams, Scenario

#: criterion number -> one PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


def tiny_scenario(rng, **over):
    """Random K=2, N_F=2, N=2 instance small enough for exhaustive enumeration."""
    users = rng.uniform(-150, 250, size=(2, 2))
    kw = dict(K=2, N_F=2, N=2, tau=2.0, user_positions=tuple(map(tuple, users)),
              eaves_estimate=tuple(rng.uniform(-300, 300, size=2)), Q_E=float(rng.uniform(0, 100)),
              t0=(0.0, 0.0), tF=tuple(rng.uniform(20, 120, size=2)), R_min=float(rng.uniform(0.5, 5.0)),
              P_peak=float(rng.choice([0.01, 0.1, 1.0])))
    kw.update(over)
    return Scenario(**kw)


def smoke_scenario(**over):
    """Reduced profile used for quick end-to-end runs."""
    kw = dict(N=20, N_F=16)
    kw.update(over)
    return Scenario(**kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def smoke():
    return smoke_scenario()


@pytest.fixture(scope="session")
def smoke_solution(smoke):
    from secure_uav_ee.alternate import alternate_optimize

    return alternate_optimize(smoke)


@pytest.fixture(scope="session")
def quick_iter():
    return IterParams(L_max_algo3=2, J_max_algo2=3)


def surrogate(scenario, q2=0.0):
    """First convex surrogate on the straight line with the optimised schedule, plus its start point."""
    from secure_uav_ee.model import straight_line_plan
    from secure_uav_ee.sched import dinkelbach_schedule
    from secure_uav_ee.traj import ScaState, _start_point, build_subproblem

    plan = straight_line_plan(scenario)
    sched = dinkelbach_schedule(scenario, plan).schedule
    state = ScaState(q2=q2, t_ref=plan.slot_positions, v_ref=plan.v)
    sub = build_subproblem(scenario, sched, state)
    x0 = _start_point(sub, plan.v)
    xv, xu, xup, _ = sub.split(x0)
    sub.scale = sub.avg_rate(xu) + q2 * sub.avg_power(xv, xup)
    return sub, x0, sched, plan


def interior_points(sub, x0, count, seed):
    """Random strictly feasible points around ``x0`` (relative perturbations, shrunk until interior)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        z = rng.standard_normal(x0.size) * np.maximum(np.abs(x0), 1e-3)
        s = 1e-2
        while s > 1e-12:
            x = x0 + s * z
            if np.all(sub.ineq_values(x) < 0):
                out.append(x)
                break
            s *= 0.5
    return out

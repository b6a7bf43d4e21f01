"""Scheduling and power allocation for a fixed flight plan.

Dinkelbach iterations over the energy-efficiency ratio; each parametric
problem is solved through its Lagrangian dual.  Layer 1 (power + subcarrier
assignment) is exact per slot, see :mod:`secure_uav_ee.kernels`; Layer 2
moves the minimum-rate multipliers by projected subgradient steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from . import kernels
from .model import LN2, FlightPlan, Scenario, Schedule, flight_power, gains

#: Relative back-off applied to the robust leakage cap.  Leaves the trajectory
#: solver a strictly feasible starting point.
LEAK_BACKOFF = 1e-3
#: Relative margin on R_min targeted by the scheduler, for the same reason.
RATE_MARGIN = 1e-4


@dataclass
class DualState:
    eta: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    epsmul: np.ndarray
    step_consts: tuple = (1e-3, 1e-3, 1e-3, 1e-3)
    g: int = 0

    @classmethod
    def zeros(cls, scenario: Scenario) -> "DualState":
        K, F, N = scenario.K, scenario.N_F, scenario.N
        c_pow = 1e-3 / scenario.P_peak
        c_rate = 1.0 / scenario.R_min if scenario.R_min > 0 else 1.0
        return cls(eta=np.zeros((F, N)), phi=np.zeros(N), theta=np.zeros(N), omega=np.zeros(K),
                   epsmul=np.zeros((K, F, N)), step_consts=(c_pow, c_pow, c_rate, c_pow))

    def step(self, u: int, g: int | None = None) -> float:
        """Diminishing step ``c_u / sqrt(g + 1)`` for multiplier family ``u`` in 1..4."""
        g = self.g if g is None else g
        return self.step_consts[u - 1] / np.sqrt(g + 1.0)


@dataclass
class Q1State:
    q1: float = 0.0
    g_algo1: int = 0
    trace: list = field(default_factory=list)


def min_eaves_dist_sq(t_n, scenario: Scenario):
    """Smallest squared UAV-eavesdropper distance over the uncertainty disc."""
    t_n = np.asarray(t_n, dtype=float)
    horiz = np.linalg.norm(t_n - scenario.eaves, axis=-1)
    out = np.maximum(horiz - scenario.Q_E, 0.0) ** 2 + scenario.H**2
    return float(out) if out.ndim == 0 else out


def leakage_cap(scenario: Scenario, plan: FlightPlan, backoff: float = LEAK_BACKOFF) -> np.ndarray:
    """Per-subcarrier robust power cap for every slot, shape (N,)."""
    dmin = min_eaves_dist_sq(plan.slot_positions, scenario)
    if np.isinf(scenario.Gamma_th):
        return np.full(scenario.N, np.inf)
    return (1.0 - backoff) * scenario.leak_coef * dmin


def waterfill_power(dual: DualState, q1: float, alpha: float, h: float, scenario: Scenario, kin) -> float:
    """Capped-free water-filling power ``alpha [(1+w_k) W / (Theta ln2) - 1/h']^+``.

    ``h`` is the raw channel gain; ``h' = h / (W N0)``.
    """
    k, i, n = kin
    Theta = q1 + scenario.N * (dual.epsmul[k, i, n] + dual.theta[n] + dual.phi[n])
    if Theta <= 0:
        raise ValueError("degenerate dual state: Theta <= 0 (seed q1 > 0 or a positive multiplier)")
    level = (1.0 + dual.omega[k]) * scenario.W / (Theta * LN2)
    hp = h / scenario.noise_power
    if hp <= 0:
        return 0.0
    return float(alpha * max(level - 1.0 / hp, 0.0))


def marginal_benefit(dual: DualState, p_kin: float, hp: float, kin, dE_min_sq: float,
                     scenario: Scenario) -> float:
    """Derivative of the Lagrangian with respect to the scheduling fraction."""
    if p_kin < 0:
        raise ValueError("negative power")
    k, i, n = kin
    x = p_kin * hp
    bracket = np.log1p(x) / LN2 - x / ((1.0 + x) * LN2)
    cap_term = dual.epsmul[k, i, n] * scenario.noise_power * dE_min_sq * scenario.Gamma_th / scenario.beta0
    return float((1.0 + dual.omega[k]) / scenario.N * scenario.W * bracket - dual.eta[i, n] + cap_term)


def assign_subcarriers(scores) -> np.ndarray:
    """Binary assignment along axis 0: argmax user (lowest index on ties) if its score >= 0."""
    scores = np.asarray(scores, dtype=float)
    win = np.argmax(scores, axis=0)
    best = np.take_along_axis(scores, win[None, ...], axis=0)[0]
    alpha = np.zeros_like(scores)
    np.put_along_axis(alpha, win[None, ...], (best >= 0).astype(float)[None, ...], axis=0)
    return alpha


def _omega_step(omega, rates_avg, target, lam3):
    return np.maximum(omega + lam3 * (target - rates_avg), 0.0)


def update_multipliers(dual: DualState, schedule: Schedule, scenario: Scenario, q1: float,
                       plan: FlightPlan, which=("phi", "theta", "omega", "eps")) -> DualState:
    """One projected subgradient step on the selected multiplier families."""
    g = dual.g
    pt = schedule.ptilde
    slot_tx = pt.sum(axis=(0, 1))
    new = replace(dual, g=g + 1)
    if "phi" in which:
        new.phi = np.maximum(dual.phi - dual.step(1, g) * (scenario.P_peak - slot_tx), 0.0)
    if "theta" in which:
        p_total = slot_tx + scenario.P_C + flight_power(plan.v, scenario.flight)
        new.theta = np.maximum(dual.theta - dual.step(2, g) * (scenario.P_max - p_total), 0.0)
    if "omega" in which:
        h = gains(scenario, plan)[:, None, :]
        from .model import link_rate

        rates = link_rate(schedule.alpha, pt, h, scenario.W, scenario.N0).sum(axis=(1, 2)) / scenario.N
        new.omega = _omega_step(dual.omega, rates, scenario.R_min, dual.step(3, g))
    if "eps" in which:
        cap = leakage_cap(scenario, plan)[None, None, :]
        new.epsmul = np.maximum(dual.epsmul + dual.step(4, g) * (pt - schedule.alpha * cap), 0.0)
    return new


# ----------------------------------------------------------------------- inner


@dataclass
class InnerResult:
    schedule: Schedule
    R: float
    P: float
    dual: DualState
    converged: bool
    rate_feasible: bool
    iterations: int
    dual_bound: float
    counts: np.ndarray
    power: np.ndarray
    q1: float = 0.0


@dataclass
class _Slots:
    """Per-(user, slot) data shared by every inner iteration."""

    hp: np.ndarray
    cap: np.ndarray
    budget: np.ndarray
    peak_binds: np.ndarray
    base_power: np.ndarray  # P_C + flight per slot
    target: float


def _prepare(scenario: Scenario, plan: FlightPlan, channel=None) -> _Slots:
    hp = (gains(scenario, plan) if channel is None else np.asarray(channel, dtype=float)) / scenario.noise_power
    cap = leakage_cap(scenario, plan)
    p_fl = flight_power(plan.v, scenario.flight)
    room = scenario.P_max - scenario.P_C - p_fl
    budget = np.maximum(np.minimum(scenario.P_peak, room), 0.0)
    return _Slots(hp=hp, cap=cap, budget=budget, peak_binds=scenario.P_peak <= room,
                  base_power=scenario.P_C + p_fl, target=scenario.R_min * (1.0 + RATE_MARGIN))


def _per_subcarrier_rate(scenario, power, hp):
    return scenario.W * np.log1p(power * hp) / LN2


def _objective(scenario, slots, counts, power, q):
    rate_kn = counts * _per_subcarrier_rate(scenario, power, slots.hp)
    user = rate_kn.sum(axis=1) / scenario.N
    tx = (counts * power).sum(axis=0)
    R = float(user.sum())
    P = float((tx + slots.base_power).sum() / scenario.N)
    return R, P, user


def _solve_slots(scenario, slots, omega, q, counts=None):
    return kernels.layer1(slots.hp, 1.0 + omega, q, np.zeros(scenario.N), slots.cap, slots.budget,
                          counts=counts, assign=counts is None, n_sub=scenario.N_F, N_slots=scenario.N,
                          W=scenario.W)


def _apportion(shares: np.ndarray, n_sub: int) -> np.ndarray:
    """Largest-remainder rounding of per-slot user shares (K, N) to integer counts."""
    raw = shares * n_sub
    counts = np.floor(raw + 1e-12).astype(np.int64)
    counts = np.minimum(counts, n_sub)
    for n in range(shares.shape[1]):
        target = min(n_sub, int(round(raw[:, n].sum())))
        spare = target - counts[:, n].sum()
        if spare > 0:
            order = np.argsort(-(raw[:, n] - counts[:, n]), kind="stable")
            counts[order[:spare], n] += 1
    return counts


def _repair(scenario, slots, counts, omega, q, max_moves=None):
    """Move subcarriers towards users below the rate target until all targets hold."""
    counts = counts.copy()
    K, N = counts.shape
    max_moves = max_moves or 20 * N * K
    for _ in range(max_moves):
        power, _, lam = _solve_slots(scenario, slots, omega, q, counts)
        _, _, user = _objective(scenario, slots, counts, power, q)
        deficit = (slots.target - user) / max(slots.target, 1e-300)
        k = int(np.argmax(deficit))
        if deficit[k] <= 0:
            return counts, power, lam, True
        r = _per_subcarrier_rate(scenario, power, slots.hp)  # (K, N)
        best, choice = -np.inf, None
        for n in range(N):
            if r[k, n] <= 0:
                continue
            free = scenario.N_F - counts[:, n].sum()
            if free > 0:
                score, donor = np.inf, -1
            else:
                score, donor = -np.inf, None
                for j in range(K):
                    if j == k or counts[j, n] == 0:
                        continue
                    if user[j] - r[j, n] / N < slots.target and r[j, n] > 0:
                        continue
                    s = r[k, n] / max(r[j, n], 1e-300)
                    if s > score:
                        score, donor = s, j
            if donor is not None and score > best:
                best, choice = score, (n, donor)
        if choice is None:
            return counts, power, lam, False
        n, j = choice
        need = int(np.ceil((slots.target - user[k]) * N / r[k, n]))
        avail = scenario.N_F - counts[:, n].sum() if j < 0 else counts[j, n]
        if j >= 0 and r[j, n] > 0:
            surplus = int((user[j] - slots.target) * N / r[j, n])
            avail = min(avail, max(surplus, 1))
        m = max(1, min(need, avail))
        counts[k, n] += m
        if j >= 0:
            counts[j, n] -= m
    power, _, lam = _solve_slots(scenario, slots, omega, q, counts)
    _, _, user = _objective(scenario, slots, counts, power, q)
    return counts, power, lam, bool(np.all(user >= slots.target))


def _integer_polish(scenario, slots, counts, omega, q, rounds=5, time_limit=5.0):
    """Improve the per-slot subcarrier counts by exact integer Dinkelbach steps.

    With per-(user, slot) powers frozen at the layer-1 solution, choosing the
    counts is a small integer program (K*N variables).  The relaxed dual can
    miss its optimum when subcarriers are few; HiGHS solves it exactly.  Powers
    are re-solved for the new counts and a step is kept only if the EE rises
    and every rate target still holds.
    """
    K, N = counts.shape
    counts = counts.copy()
    power, _, _ = _solve_slots(scenario, slots, omega, q, counts)
    R, P, _ = _objective(scenario, slots, counts, power, q)
    ee = R / P
    for _ in range(rounds):
        r = _per_subcarrier_rate(scenario, power, slots.hp)  # (K, N), index k * N + n
        per_slot = np.kron(np.ones(K), np.eye(N))  # sum over users in each slot
        rows = [LinearConstraint(per_slot, -np.inf, scenario.N_F),
                LinearConstraint(per_slot * power.ravel()[None, :], -np.inf, slots.budget),
                LinearConstraint(np.kron(np.eye(K), np.ones(N)) * r.ravel()[None, :] / N, slots.target, np.inf)]
        res = milp(-(r - ee * power).ravel(), constraints=rows, integrality=np.ones(K * N),
                   bounds=Bounds(0, scenario.N_F), options={"time_limit": time_limit})
        if res.x is None:
            break
        cand = np.rint(res.x).astype(np.int64).reshape(K, N)
        p_new, _, _ = _solve_slots(scenario, slots, omega, q, cand)
        R_new, P_new, user = _objective(scenario, slots, cand, p_new, q)
        if not np.all(user >= slots.target) or R_new / P_new <= ee * (1 + 1e-12):
            break
        counts, power, ee = cand, p_new, R_new / P_new
    return counts, power


def _expand(scenario: Scenario, counts: np.ndarray, power: np.ndarray) -> Schedule:
    """Map per-slot subcarrier counts to a binary (K, N_F, N) schedule."""
    K, N = counts.shape
    alpha = np.zeros((K, scenario.N_F, N))
    p = np.zeros_like(alpha)
    for n in range(N):
        start = 0
        for k in range(K):
            c = int(counts[k, n])
            if c:
                alpha[k, start:start + c, n] = 1.0
                p[k, start:start + c, n] = power[k, n]
                start += c
    return Schedule(alpha=alpha, p=p)


def _finalize_dual(scenario, slots, omega, q, counts, power, lam, dual: DualState) -> DualState:
    K, N = counts.shape
    N_s = scenario.N
    phi = np.where(slots.peak_binds, lam, 0.0)
    theta = np.where(slots.peak_binds, 0.0, lam)
    Theta = q + N_s * lam  # (N,)
    x = power * slots.hp
    marg = (1.0 + omega)[:, None] * scenario.W * slots.hp / ((1.0 + x) * LN2)
    at_cap = np.isfinite(slots.cap)[None, :] & (power >= slots.cap[None, :] * (1 - 1e-12)) & (power > 0)
    eps_kn = np.where(at_cap, np.maximum(marg - Theta[None, :], 0.0) / N_s, 0.0)
    sched = _expand(scenario, counts, power)
    epsmul = np.repeat(eps_kn[:, None, :], scenario.N_F, axis=1) * sched.alpha
    val = ((1.0 + omega)[:, None] / N_s * scenario.W * np.log1p(x) / LN2 - Theta[None, :] * power / N_s)
    eta = np.repeat(np.maximum(val.max(axis=0), 0.0)[None, :], scenario.N_F, axis=0)
    return replace(dual, eta=eta, phi=phi, theta=theta, omega=omega.copy(), epsmul=epsmul)


def _recover(scenario, slots, shares, omega, q1):
    """Round ergodic shares to counts and repair rate deficits; None if infeasible."""
    counts, power, lam, ok = _repair(scenario, slots, _apportion(shares, scenario.N_F), omega, q1)
    if not ok:
        return None
    R, P, _ = _objective(scenario, slots, counts, power, q1)
    return (R - q1 * P, counts, power, lam, omega.copy())


def solve_inner(q1: float, scenario: Scenario, plan: FlightPlan, dual: DualState | None = None,
                channel=None, slots: _Slots | None = None) -> InnerResult:
    """Maximise ``R - q1 P`` over the relaxed schedule via the dual.

    Stops once a rate-feasible binary schedule is within ``eps_tol`` (relative
    to its sum rate) of the best dual bound, or after ``g_inner_max`` steps.
    """
    slots = slots or _prepare(scenario, plan, channel)
    dual = dual or DualState.zeros(scenario)
    omega = dual.omega.copy()
    K, N = slots.hp.shape
    g_max = scenario.iter.g_inner_max
    tol = scenario.iter.eps_tol
    share_acc = np.zeros((K, N))
    weight_acc = 0.0
    best = None  # (objective, counts, power, lam, omega)
    dual_bound = np.inf
    converged = False

    def consider(cand):
        nonlocal best
        if cand is not None and (best is None or cand[0] > best[0]):
            best = cand

    def gap_closed():
        if best is None:
            return False
        R_b, _, _ = _objective(scenario, slots, best[1], best[2], q1)
        return dual_bound - best[0] <= tol * max(R_b, 1e-300) or R_b == 0.0 and dual_bound <= best[0]

    g = 0
    for g in range(g_max):
        power, counts, lam = _solve_slots(scenario, slots, omega, q1)
        R, P, user = _objective(scenario, slots, counts, power, q1)
        # dual function value: upper bound on the relaxed optimum of R - q1 P
        dual_val = (R - q1 * P) + float(omega @ (user - slots.target)) + float(lam @ (
            slots.budget - (counts * power).sum(axis=0)))
        dual_bound = min(dual_bound, dual_val)
        if np.all(user >= slots.target):
            consider((R - q1 * P, counts.copy(), power.copy(), lam.copy(), omega.copy()))
        if gap_closed():
            converged = True
            break
        lam3 = dual.step(3, g)
        share_acc += lam3 * counts / scenario.N_F
        weight_acc += lam3
        omega = _omega_step(omega, user, slots.target, lam3)
        if (g + 1) % 25 == 0:
            consider(_recover(scenario, slots, share_acc / weight_acc, omega, q1))
            if gap_closed():
                converged = True
                break

    if best is None and weight_acc > 0:
        consider(_recover(scenario, slots, share_acc / weight_acc, omega, q1))
    rate_ok = best is not None
    if rate_ok:
        _, counts, power, lam, omega = best
    else:
        power, counts, lam = _solve_slots(scenario, slots, omega, q1)
    R, P, _ = _objective(scenario, slots, counts, power, q1)
    new_dual = _finalize_dual(scenario, slots, omega, q1, counts, power, lam, replace(dual, g=dual.g + g + 1))
    return InnerResult(schedule=_expand(scenario, counts, power), R=R, P=P, dual=new_dual,
                       converged=converged, rate_feasible=rate_ok, iterations=g + 1,
                       dual_bound=dual_bound, counts=counts, power=power, q1=q1)


# ------------------------------------------------------------------ Dinkelbach


@dataclass
class ScheduleResult:
    schedule: Schedule
    q1: float
    state: Q1State
    converged: bool
    rate_feasible: bool
    dual: DualState
    inner: InnerResult | None = None
    used_incumbent: bool = False


def schedule_ratio(scenario: Scenario, plan: FlightPlan, schedule: Schedule) -> float:
    from .model import energy_efficiency

    return energy_efficiency(schedule, plan, scenario)


def schedule_is_feasible(scenario: Scenario, plan: FlightPlan, schedule: Schedule, rtol: float = 1e-9) -> bool:
    """True when ``schedule`` meets C2-C7 on ``plan`` (robust cap without back-off)."""
    from .model import user_average_rates

    a, pt = schedule.alpha, schedule.ptilde
    if np.any(a < -rtol) or np.any(a > 1 + rtol) or np.any(a.sum(axis=0) > 1 + rtol) or np.any(schedule.p < 0):
        return False
    slot_tx = pt.sum(axis=(0, 1))
    if np.any(slot_tx > scenario.P_peak * (1 + rtol)):
        return False
    if np.any(slot_tx + scenario.P_C + flight_power(plan.v, scenario.flight) > scenario.P_max * (1 + rtol)):
        return False
    if np.any(user_average_rates(scenario, schedule, plan) < scenario.R_min * (1 - rtol)):
        return False
    if np.isinf(scenario.Gamma_th):
        return True
    cap = leakage_cap(scenario, plan, backoff=0.0)
    return bool(np.all(pt <= a * cap[None, None, :] * (1 + rtol)))


def dinkelbach_schedule(scenario: Scenario, plan: FlightPlan, incumbent: Schedule | None = None,
                        channel=None) -> ScheduleResult:
    """Energy-efficient scheduling and power allocation on a fixed plan."""
    slots = _prepare(scenario, plan, channel)
    state = Q1State()
    tol = scenario.iter.eps_tol
    dual = DualState.zeros(scenario)
    q = 0.0
    best = None
    converged = False
    for g in range(scenario.iter.G_max_algo1):
        state.g_algo1 = g
        inner = solve_inner(q, scenario, plan, dual=dual, slots=slots)
        R, P = inner.R, inner.P
        ratio = R / P
        if best is not None and ratio < q * (1.0 - 1e-12):
            # inexact parametric solve; keep the last improving iterate
            converged = True
            break
        state.trace.append((R, P, ratio))
        best = inner
        dual = inner.dual
        if R - q * P <= tol * R:
            converged = True
            q = ratio
            break
        q = ratio
    if best.rate_feasible:
        counts, power = _integer_polish(scenario, slots, best.counts, best.dual.omega, q)
        R, P, _ = _objective(scenario, slots, counts, power, q)
        if R / P > q:
            best = replace(best, schedule=_expand(scenario, counts, power), R=R, P=P, counts=counts, power=power)
            q = R / P
            state.trace.append((R, P, q))
    state.q1 = q
    result = ScheduleResult(schedule=best.schedule, q1=q, state=state, converged=converged,
                            rate_feasible=best.rate_feasible, dual=best.dual, inner=best)
    if channel is None and incumbent is not None and schedule_is_feasible(scenario, plan, incumbent):
        q_inc = schedule_ratio(scenario, plan, incumbent)
        if q_inc > q or not best.rate_feasible:
            result.schedule, result.q1, result.used_incumbent = incumbent, q_inc, True
            result.rate_feasible = True
            state.q1 = q_inc
    return result

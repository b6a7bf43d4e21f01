"""Independent checkers for the solvers.

Nothing here calls the scheduling or trajectory code: channel gains, rates,
flight power and the worst-case eavesdropper point are re-derived from their
defining formulas so that a bug in a solver cannot hide itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import FlightPlan, Scenario, Schedule


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    max_enum: int = 20_000_000
    grid: int = 25
    samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if min(self.max_enum, self.grid, self.samples) < 1:
            raise ValueError("oracle budgets must be positive")


# ---------------------------------------------------------------- raw formulas

def _gain(scenario, pos):
    d = scenario.users[:, None, :] - pos[None, :, :]
    return scenario.beta0 / (np.einsum("knj,knj->kn", d, d) + scenario.H ** 2)


def _flight(scenario, v):
    f = scenario.flight
    sp = np.hypot(v[:, 0], v[:, 1])
    return (f.P_o * (1 + 3 * sp ** 2 / (f.Omega ** 2 * f.r ** 2)) + f.P_i * f.v0 / sp
            + 0.5 * f.d0 * f.rho * f.s * f.A * sp ** 3)


def _worst_point(t_n, centre, radius):
    """Closest point of the disc to each ``t_n``: the eavesdropper spot with the strongest leakage."""
    d = t_n - centre
    dist = np.hypot(d[:, 0], d[:, 1])
    out = t_n.copy()
    far = dist > radius
    out[far] = centre + d[far] * (radius / dist[far])[:, None]
    return out


def _leak_cap(scenario, pos):
    """Largest per-subcarrier power meeting the leakage threshold anywhere in the disc."""
    if not math.isfinite(scenario.Gamma_th):
        return np.full(len(pos), np.inf)
    w = _worst_point(pos, scenario.eaves, scenario.Q_E)
    dE2 = np.sum((w - pos) ** 2, axis=1) + scenario.H ** 2
    return scenario.Gamma_th * scenario.W * scenario.N0 * dE2 / scenario.beta0


# ---------------------------------------------------------------- brute force

def brute_force_schedule(scenario: Scenario, plan: FlightPlan, budget: OracleBudget = OracleBudget()):
    """Exhaustive best EE over binary assignments and a uniform power grid.

    Each (subcarrier, slot) goes to one user with one of ``budget.grid``
    power levels in ``[0, min(P_peak, leakage cap)]`` (level 0 means idle).
    Returns ``(ee, schedule)``; ``ee`` is ``-inf`` if no grid point meets the
    minimum rates.
    """
    sc = scenario
    K, NF, N, G = sc.K, sc.N_F, sc.N, budget.grid
    per_slot = (K * G) ** NF
    if per_slot ** N > budget.max_enum:
        raise BudgetExceeded(f"{per_slot ** N} combinations exceed budget {budget.max_enum}")
    pos = plan.t[1:]
    h = _gain(sc, pos)  # (K, N)
    cap = np.minimum(sc.P_peak, _leak_cap(sc, pos))  # (N,)
    fly = _flight(sc, plan.v)
    noise = sc.W * sc.N0

    choices = list(itertools.product(range(K), range(G)))  # per subcarrier
    combos = np.array(list(itertools.product(range(len(choices)), repeat=NF)))  # (per_slot, NF)
    users = np.array([c[0] for c in choices])[combos]  # (per_slot, NF)
    levels = np.array([c[1] for c in choices])[combos]
    slot_rate, slot_power, slot_ok = [], [], []
    for n in range(N):
        p = levels * cap[n] / (G - 1)
        r_sub = sc.W * np.log2(1 + p * h[users, n] / noise)
        rk = np.stack([np.where(users == k, r_sub, 0.0).sum(axis=1) for k in range(K)], axis=1)
        tx = p.sum(axis=1)
        ok = (tx <= sc.P_peak * (1 + 1e-12)) & (tx + sc.P_C + fly[n] <= sc.P_max)
        slot_rate.append(rk)
        slot_power.append(tx + sc.P_C + fly[n])
        slot_ok.append(ok)

    best = (-math.inf, None)
    # enumerate all slot combinations, first slot vectorised
    for rest in itertools.product(range(per_slot), repeat=N - 1):
        rates = slot_rate[0].copy()
        power = slot_power[0].copy()
        ok = slot_ok[0].copy()
        for n, c in enumerate(rest, start=1):
            rates += slot_rate[n][c]
            power += slot_power[n][c]
            ok &= slot_ok[n][c]
        ok &= np.all(rates / N >= sc.R_min * (1 - 1e-12), axis=1)
        if not ok.any():
            continue
        ee = np.where(ok, rates.sum(axis=1) / power, -np.inf)
        i = int(np.argmax(ee))
        if ee[i] > best[0]:
            best = (float(ee[i]), (i,) + rest)
    if best[1] is None:
        return -math.inf, None
    alpha = np.zeros((K, NF, N))
    power = np.zeros((K, NF, N))
    for n, c in enumerate(best[1]):
        for i in range(NF):
            k = users[c, i]
            lvl = levels[c, i]
            if lvl > 0:
                alpha[k, i, n] = 1.0
                power[k, i, n] = lvl * cap[n] / (G - 1)
    return best[0], Schedule(alpha, power)


# ---------------------------------------------------------------- robustness

@dataclass
class RobustCheck:
    margin: float  # Gamma_th - worst leakage SNR
    worst_ratio: float  # worst SNR / Gamma_th
    violations: int  # scheduled entries with SNR > Gamma_th (1 + tol)
    worst_slot: int


def sampled_robust_check(schedule: Schedule, plan: FlightPlan, scenario: Scenario, samples: int = 10_000,
                         seed: int = 0, tol: float = 1e-6) -> RobustCheck:
    """Worst leakage over uniform disc samples plus the analytic worst point."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sc = scenario
    p_max = np.where(schedule.alpha > 0, schedule.p, 0.0).max(axis=(0, 1))  # (N,)
    if not math.isfinite(sc.Gamma_th):
        return RobustCheck(math.inf, 0.0, 0, -1)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, 2))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = sc.Q_E * np.sqrt(rng.random(samples))
    pts = sc.eaves + g * rad[:, None]  # (S, 2)
    pos = plan.t[1:]
    d2 = np.sum((pts[None, :, :] - pos[:, None, :]) ** 2, axis=2)  # (N, S)
    dmin = d2.min(axis=1)
    worst = _worst_point(pos, sc.eaves, sc.Q_E)
    dmin = np.minimum(dmin, np.sum((worst - pos) ** 2, axis=1)) + sc.H ** 2
    snr = p_max * sc.beta0 / (sc.W * sc.N0 * dmin)
    n = int(np.argmax(snr))
    ratio = float(snr[n] / sc.Gamma_th) if sc.Gamma_th > 0 else (math.inf if snr[n] > 0 else 0.0)
    # count individual scheduled entries above the threshold
    entry = np.where(schedule.alpha > 0, schedule.p, 0.0) * sc.beta0 / (sc.W * sc.N0 * dmin[None, None, :])
    viol = int(np.sum(entry > sc.Gamma_th * (1 + tol)))
    return RobustCheck(float(sc.Gamma_th - snr[n]), ratio, viol, n)


# ---------------------------------------------------------------- derivatives

def finite_diff_check(fun, grad, points, h: float = 1e-6, per_row: bool = False) -> float:
    """Largest relative gap between ``grad`` and central differences of ``fun``.

    ``fun`` may be scalar- or vector-valued; ``grad`` returns the gradient or
    Jacobian (rows = outputs).  The error at each point is
    ``max|G - G_fd| / max(1, max|G|)``, taken over the whole matrix or, with
    ``per_row``, separately for every output row.  Central differences use
    the step ``h * max(1, |x_j|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        G = np.asarray(grad(x), dtype=float)
        G = G.reshape(1, -1) if G.ndim == 1 else np.atleast_2d(G)
        fd = np.zeros_like(G)
        for j in range(x.size):
            step = h * max(1.0, abs(x[j]))
            e = np.zeros_like(x)
            e[j] = step
            fd[:, j] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step)
        if per_row:
            scale = np.maximum(1.0, np.abs(G).max(axis=1))
            err = float((np.abs(G - fd).max(axis=1) / scale).max()) if G.size else 0.0
        else:
            err = float(np.abs(G - fd).max() / max(1.0, np.abs(G).max())) if G.size else 0.0
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------- constraint audit

def audit_constraints(scenario: Scenario, schedule: Schedule, plan: FlightPlan) -> dict:
    """Violation of every constraint of the joint problem, from raw formulas.

    Values are ``max(0, violation)`` in natural units (bit/s for rates, W for
    powers, m and m/s for geometry).  The leakage entry is the absolute SNR
    excess and ``C7_rel`` the same excess relative to the threshold.
    """
    sc = scenario
    a, p = schedule.alpha, schedule.p
    t, v = plan.t, plan.v
    pos = t[1:]
    h = _gain(sc, pos)
    noise = sc.W * sc.N0
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(a > 0, sc.W * a * np.log2(1 + p * h[:, None, :] / noise), 0.0)
    tx = (a * p).sum(axis=(0, 1))
    pw = tx + sc.P_C + _flight(sc, v)
    res = {
        "C1": float(np.minimum(np.abs(a), np.abs(a - 1)).max()),
        "C2": float((a.sum(axis=0) - 1).max()),
        "C3": float((-p).max()),
        "C4": float((tx - sc.P_peak).max()),
        "C5": float((pw - sc.P_max).max()),
        "C6": float((sc.R_min - rate.sum(axis=(1, 2)) / sc.N).max()),
        "C8": float(np.linalg.norm(t[0] - sc.start)),
        "C9": float(np.linalg.norm(t[-1] - sc.end)),
        "C10": float(np.linalg.norm(t[1:] - t[:-1] - sc.tau * v, axis=1).max()),
        "C11": float((np.hypot(v[:, 0], v[:, 1]) - sc.V_max).max()),
        "C12": float((np.hypot(*(v[1:] - v[:-1]).T) - sc.V_acc).max()) if len(v) > 1 else 0.0,
    }
    if math.isfinite(sc.Gamma_th):
        w = _worst_point(pos, sc.eaves, sc.Q_E)
        dE2 = np.sum((w - pos) ** 2, axis=1) + sc.H ** 2
        snr = np.where(a > 0, p, 0.0) * sc.beta0 / (noise * dE2[None, None, :])
        res["C7"] = float((snr - sc.Gamma_th).max())
        res["C7_rel"] = float((snr / sc.Gamma_th - 1).max()) if sc.Gamma_th > 0 else float(snr.max() > 0)
    else:
        res["C7"] = res["C7_rel"] = 0.0
    return {k: max(0.0, val) for k, val in res.items()}

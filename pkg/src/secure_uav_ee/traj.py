"""Trajectory and velocity design for a fixed schedule.

The non-convex trajectory problem is handled by successive convex
approximation: user rates are replaced by their tangent (affine) lower bound
in the squared-distance slack ``u``, the speed slack ``upsilon`` is bounded
through the tangent of ``|v|^2`` and the robust leakage condition uses a
tangent minorant of the squared eavesdropper distance.  Each convex surrogate
is solved for a Dinkelbach parameter ``q2`` with the log-barrier solver.

Decision vector layout: ``[vx (N), vy (N), u (active pairs), upsilon (N), psi (leaky slots)]``.
Positions are never decision variables: ``t[n] = t0 + tau * sum_{m<=n} v[m]``
and the terminal condition is the affine equality ``tau * sum(v) = tF - t0``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .convex import BarrierSettings, BarrierError, InfeasibleStartError, SmoothProgram, barrier_solve
from .model import LN2, UPSILON_MIN, FlightPlan, Scenario, Schedule

#: Relative gap of the start point to the slack constraints ``u >= d^2`` and ``upsilon <= |v|``.
START_SLACK = 1e-7
#: Smallest starting value of the S-procedure multiplier.
PSI_FLOOR = 1e-6
#: Multiplicative R_min relaxation per retry when the first surrogate has no interior.
RELAX_FACTOR = 0.99
MAX_RELAX = 3
#: Barrier weight for warm solves (start already near the central path of a close problem).
WARM_MU0 = 1e-3

SETTINGS = BarrierSettings(mu0=1.0, kappa=0.2, newton_tol=1e-8, gap_tol=1e-10, max_newton=60, max_stages=40,
                           scaled_newton=False)


class TrajectoryError(RuntimeError):
    """Convex sub-solver failure with the SCA/Dinkelbach iteration that triggered it."""


# ------------------------------------------------------------ bounds and models

def rate_lower_bound(u, u_ref, gamma, alpha, W_hz: float):
    """Tangent lower bound of ``W a log2(1 + gamma/u)`` at ``u_ref`` (affine in ``u``)."""
    u = np.asarray(u, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(u <= 0) or np.any(u_ref <= 0):
        raise ValueError("u and u_ref must be positive")
    if np.any(gamma < 0):
        raise ValueError("gamma must be non-negative")
    val = np.log1p(gamma / u_ref) / LN2 - gamma * (u - u_ref) / (u_ref * (u_ref + gamma) * LN2)
    out = W_hz * np.asarray(alpha, dtype=float) * val
    return float(out) if out.ndim == 0 else out


def velocity_lower_bound(v, v_ref):
    """Tangent minorant ``|v_ref|^2 + 2 v_ref.(v - v_ref)`` of ``|v|^2``."""
    v = np.asarray(v, dtype=float)
    v_ref = np.asarray(v_ref, dtype=float)
    out = np.sum(v_ref * v_ref, axis=-1) + 2.0 * np.sum(v_ref * (v - v_ref), axis=-1)
    return float(out) if out.ndim == 0 else out


def equivalent_power(transmit, v, upsilon, scenario: Scenario):
    """Slot power with the induced term written through the speed slack ``upsilon``."""
    upsilon = np.asarray(upsilon, dtype=float)
    if np.any(upsilon < UPSILON_MIN * (1 - 1e-12)):
        raise ValueError(f"upsilon below floor {UPSILON_MIN}")
    return _eq_power(transmit, v, upsilon, scenario)


def _eq_power(transmit, v, upsilon, scenario):
    f = scenario.flight
    sq = np.sum(np.asarray(v, dtype=float) ** 2, axis=-1)
    out = (np.asarray(transmit, dtype=float) + scenario.P_C + f.P_o + f.profile_coef * sq
           + f.P_i * f.v0 / upsilon + f.parasite_coef * sq ** 1.5)
    return float(out) if out.ndim == 0 else out


def sproc_matrix(t_n, psi_n: float, c_val: float, scenario: Scenario) -> np.ndarray:
    """3x3 certificate matrix of the robust leakage implication."""
    d = np.asarray(t_n, dtype=float) - scenario.eaves
    M = np.empty((3, 3))
    M[:2, :2] = (psi_n + 1.0) * np.eye(2)
    M[:2, 2] = d
    M[2, :2] = d
    M[2, 2] = -psi_n * scenario.Q_E ** 2 + c_val
    return M


def exact_c(t_n, gamma, scenario: Scenario):
    t_n = np.asarray(t_n, dtype=float)
    return np.sum((t_n - scenario.eaves) ** 2, axis=-1) + scenario.H ** 2 - np.asarray(gamma) / scenario.Gamma_th


def linearized_c(t_n, t_ref, gamma, scenario: Scenario):
    """Affine minorant of ``|t - tE|^2 + H^2 - gamma/Gamma_th`` touching at ``t_ref``."""
    t_n = np.asarray(t_n, dtype=float)
    t_ref = np.asarray(t_ref, dtype=float)
    e = scenario.eaves
    out = (e @ e + 2.0 * np.sum(t_n * t_ref, axis=-1) - np.sum(t_ref * t_ref, axis=-1)
           - 2.0 * t_n @ e + scenario.H ** 2 - np.asarray(gamma, dtype=float) / scenario.Gamma_th)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------ state and problem

@dataclass
class ScaState:
    j_algo2: int = 0
    j_inner: int = 0
    q2: float = 0.0
    t_ref: np.ndarray | None = None
    v_ref: np.ndarray | None = None
    u_ref: np.ndarray | None = None
    trace: list = field(default_factory=list)


@dataclass
class _Layout:
    N: int
    pairs_k: np.ndarray
    pairs_n: np.ndarray
    leaky: np.ndarray
    use_psi: bool

    @property
    def nu(self):
        return len(self.pairs_k)

    @property
    def npsi(self):
        return len(self.leaky) if self.use_psi else 0

    @property
    def iu(self):
        return 2 * self.N

    @property
    def iup(self):
        return 2 * self.N + self.nu

    @property
    def ipsi(self):
        return 3 * self.N + self.nu

    @property
    def size(self):
        return 3 * self.N + self.nu + self.npsi


@dataclass
class ConvexSubproblem:
    """Convex surrogate at one linearisation point for one Dinkelbach parameter."""

    scenario: Scenario
    layout: _Layout
    rate_a: np.ndarray  # per active pair, rate value at u_ref (sum over subcarriers)
    rate_b: np.ndarray  # per active pair, -d rate / d u
    u_ref: np.ndarray
    gamma: np.ndarray  # per leaky slot, largest scheduled gamma
    transmit: np.ndarray  # (N,)
    t_ref: np.ndarray  # (N, 2) slot positions
    v_ref: np.ndarray  # (N, 2)
    r_min: float
    q2: float = 0.0
    scale: float = 1.0

    # -- helpers
    def split(self, x):
        L = self.layout
        N = L.N
        v = np.column_stack([x[:N], x[N:2 * N]])
        u = x[L.iu:L.iup]
        up = x[L.iup:L.iup + N]
        psi = x[L.ipsi:L.ipsi + L.npsi]
        return v, u, up, psi

    def positions(self, v):
        return self.scenario.start + self.scenario.tau * np.cumsum(v, axis=0)

    def avg_rate(self, u):
        return float(np.sum(self.rate_a - self.rate_b * (u - self.u_ref))) / self.layout.N

    def user_rates(self, u):
        r = np.zeros(self.scenario.K)
        np.add.at(r, self.layout.pairs_k, self.rate_a - self.rate_b * (u - self.u_ref))
        return r / self.layout.N

    def slot_power(self, v, up):
        return _eq_power(self.transmit, v, up, self.scenario)

    def avg_power(self, v, up):
        return float(np.mean(self.slot_power(v, up)))

    # -- program assembly
    def _equality(self):
        N = self.layout.N
        A = np.zeros((2, self.layout.size))
        A[0, :N] = self.scenario.tau
        A[1, N:2 * N] = self.scenario.tau
        return A, self.scenario.end - self.scenario.start

    def _flight_derivs(self, v, up):
        f = self.scenario.flight
        speed = np.linalg.norm(v, axis=1)
        g_v = 2 * f.profile_coef * v + 3 * f.parasite_coef * speed[:, None] * v
        safe = np.where(speed > 0, speed, 1.0)
        outer = np.einsum("ni,nj->nij", v, v) / safe[:, None, None]
        H_v = (2 * f.profile_coef + 3 * f.parasite_coef * speed)[:, None, None] * np.eye(2) \
            + 3 * f.parasite_coef * np.where(speed > 0, 1.0, 0.0)[:, None, None] * outer
        g_up = -f.P_i * f.v0 / up ** 2
        H_up = 2 * f.P_i * f.v0 / up ** 3
        return g_v, H_v, g_up, H_up

    def objective_value(self, x):
        v, u, up, _ = self.split(x)
        c = 1.0 / (self.layout.N * self.scale)
        return float(c * (-np.sum(self.rate_a - self.rate_b * (u - self.u_ref))
                          + self.q2 * np.sum(self.slot_power(v, up))))

    def objective(self, x):
        L = self.layout
        N = L.N
        v, u, up, _ = self.split(x)
        c = 1.0 / (N * self.scale)
        val = c * (-np.sum(self.rate_a - self.rate_b * (u - self.u_ref)) + self.q2 * np.sum(self.slot_power(v, up)))
        g_v, H_v, g_up, H_up = self._flight_derivs(v, up)
        grad = np.zeros(L.size)
        grad[:N] = c * self.q2 * g_v[:, 0]
        grad[N:2 * N] = c * self.q2 * g_v[:, 1]
        grad[L.iu:L.iup] = c * self.rate_b
        grad[L.iup:L.iup + N] = c * self.q2 * g_up
        H = np.zeros((L.size, L.size))
        self._add_slot_blocks(H, c * self.q2 * H_v, c * self.q2 * H_up)
        return float(val), grad, H

    def _add_slot_blocks(self, H, Hv, Hup):
        L = self.layout
        N = L.N
        idx = np.arange(N)
        H[idx, idx] += Hv[:, 0, 0]
        H[idx, N + idx] += Hv[:, 0, 1]
        H[N + idx, idx] += Hv[:, 1, 0]
        H[N + idx, N + idx] += Hv[:, 1, 1]
        j = L.iup + idx
        H[j, j] += Hup

    def _families(self, x, jac=True):
        """Constraint values and sparse Jacobian triplets for every family."""
        sc = self.scenario
        L = self.layout
        N = L.N
        tau = sc.tau
        v, u, up, psi = self.split(x)
        t = self.positions(v)
        vals, rows, cols, data = [], [], [], []
        row0 = 0

        def add(values, r, c, d):
            nonlocal row0
            vals.append(values)
            if not jac:
                return
            rows.append(r + row0)
            cols.append(c)
            data.append(d)
            row0 += len(values)

        idx = np.arange(N)
        # average power cap
        g_v, _, g_up, _ = self._flight_derivs(v, up)
        pw = self.slot_power(v, up)
        add((pw - sc.P_max) / sc.P_max, np.repeat(idx, 3),
            np.column_stack([idx, N + idx, L.iup + idx]).ravel(),
            (np.column_stack([g_v[:, 0], g_v[:, 1], g_up]) / sc.P_max).ravel())
        # minimum user rate (affine in u)
        if self.r_min > 0:
            users = np.unique(L.pairs_k)
            rate = self.user_rates(u)
            pos = np.searchsorted(users, L.pairs_k)
            add((self.r_min - rate[users]) / self.r_min, pos, L.iu + np.arange(L.nu),
                self.rate_b / (N * self.r_min))
        # robust leakage (Schur form of the certificate)
        if len(L.leaky):
            n_l = L.leaky
            tn = t[n_l]
            d = tn - sc.eaves
            dref = self.t_ref[n_l] - sc.eaves
            ctil = linearized_c(tn, self.t_ref[n_l], self.gamma, sc)
            grad_c = 2.0 * dref
            if L.use_psi:
                p1 = psi + 1.0
                g = np.sum(d * d, axis=1) / p1 + psi * sc.Q_E ** 2 - ctil
                gt = 2.0 * d / p1[:, None] - grad_c
                gpsi = -np.sum(d * d, axis=1) / p1 ** 2 + sc.Q_E ** 2
            else:
                g = -ctil
                gt = -grad_c
            r, c, dd = self._cum_rows(n_l, gt * tau) if jac else (None, None, None)
            if L.use_psi and jac:
                r = np.concatenate([r, np.arange(len(n_l))])
                c = np.concatenate([c, L.ipsi + np.arange(len(n_l))])
                dd = np.concatenate([dd, gpsi])
            add(g, r, c, dd)
        # speed cap and acceleration cap
        add((np.sum(v * v, axis=1) - sc.V_max ** 2) / sc.V_max ** 2, np.repeat(idx, 2),
            np.column_stack([idx, N + idx]).ravel(), (2 * v / sc.V_max ** 2).ravel())
        if N > 1:
            dv = v[1:] - v[:-1]
            i1 = np.arange(N - 1)
            r = np.repeat(i1, 4)
            c = np.column_stack([i1 + 1, N + i1 + 1, i1, N + i1]).ravel()
            dd = (np.column_stack([2 * dv, -2 * dv]) / sc.V_acc ** 2).ravel()
            add((np.sum(dv * dv, axis=1) - sc.V_acc ** 2) / sc.V_acc ** 2, r, c, dd)
        # squared-distance slacks
        if L.nu:
            tk = sc.users[L.pairs_k]
            tn = t[L.pairs_n]
            diff = tk - tn
            g = (np.sum(diff * diff, axis=1) + sc.H ** 2 - u) / self.u_ref
            if jac:
                r, c, dd = self._cum_rows(L.pairs_n, -2.0 * tau * diff / self.u_ref[:, None])
                r = np.concatenate([r, np.arange(L.nu)])
                c = np.concatenate([c, L.iu + np.arange(L.nu)])
                dd = np.concatenate([dd, -1.0 / self.u_ref])
            else:
                r = c = dd = None
            add(g, r, c, dd)
        # speed slack below the tangent of |v|^2, and its floor
        vr2 = np.sum(self.v_ref ** 2, axis=1)
        sc15 = np.maximum(vr2, 1.0)
        add((up ** 2 - velocity_lower_bound(v, self.v_ref)) / sc15, np.repeat(idx, 3),
            np.column_stack([idx, N + idx, L.iup + idx]).ravel(),
            (np.column_stack([-2 * self.v_ref[:, 0], -2 * self.v_ref[:, 1], 2 * up]) / sc15[:, None]).ravel())
        add(UPSILON_MIN - up, idx, L.iup + idx, -np.ones(N))
        if L.npsi:
            add(-psi, np.arange(L.npsi), L.ipsi + np.arange(L.npsi), -np.ones(L.npsi))
        return vals, rows, cols, data, row0

    def _cum_rows(self, slots, coef):
        """Jacobian triplets of rows depending on ``t[slot]`` with per-row coefficient ``coef`` (r, 2)."""
        N = self.layout.N
        lengths = slots + 1
        r = np.repeat(np.arange(len(slots)), lengths)
        m = np.concatenate([np.arange(n) for n in lengths]) if len(slots) else np.zeros(0, int)
        cx = np.repeat(coef[:, 0], lengths)
        cy = np.repeat(coef[:, 1], lengths)
        return (np.concatenate([r, r]), np.concatenate([m, N + m]), np.concatenate([cx, cy]))

    def ineq_values(self, x):
        return np.concatenate(self._families(x, jac=False)[0])

    def ineq(self, x):
        vals, rows, cols, data, m = self._families(x)
        J = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, self.layout.size))
        return np.concatenate(vals), J

    def ineq_hess(self, x, w):
        sc = self.scenario
        L = self.layout
        N = L.N
        tau = sc.tau
        v, u, up, psi = self.split(x)
        H = np.zeros((L.size, L.size))
        pos = 0
        # power cap
        w5 = w[pos:pos + N] / sc.P_max
        pos += N
        _, H_v, _, H_up = self._flight_derivs(v, up)
        self._add_slot_blocks(H, w5[:, None, None] * H_v, w5 * H_up)
        if self.r_min > 0:
            pos += len(np.unique(L.pairs_k))
        # cumulative-position curvature: weight per slot on |t[n]|^2
        slot_w = np.zeros(N)
        if len(L.leaky):
            nl = len(L.leaky)
            w7 = w[pos:pos + nl]
            pos += nl
            if L.use_psi:
                p1 = psi + 1.0
                t = self.positions(v)
                d = t[L.leaky] - sc.eaves
                np.add.at(slot_w, L.leaky, w7 * 2.0 / p1 * tau ** 2)
                cross = -2.0 * d / p1[:, None] ** 2 * tau * w7[:, None]
                j = L.ipsi + np.arange(nl)
                for a in range(nl):
                    n = L.leaky[a]
                    H[:n + 1, j[a]] += cross[a, 0]
                    H[N:N + n + 1, j[a]] += cross[a, 1]
                    H[j[a], :n + 1] += cross[a, 0]
                    H[j[a], N:N + n + 1] += cross[a, 1]
                H[j, j] += w7 * 2.0 * np.sum(d * d, axis=1) / p1 ** 3
        w11 = w[pos:pos + N] * 2.0 / sc.V_max ** 2
        pos += N
        idx = np.arange(N)
        H[idx, idx] += w11
        H[N + idx, N + idx] += w11
        if N > 1:
            w12 = w[pos:pos + N - 1] * 2.0 / sc.V_acc ** 2
            pos += N - 1
            for off in (0, N):
                a = off + np.arange(N - 1)
                H[a, a] += w12
                H[a + 1, a + 1] += w12
                H[a, a + 1] -= w12
                H[a + 1, a] -= w12
        if L.nu:
            w13 = w[pos:pos + L.nu] / self.u_ref
            pos += L.nu
            np.add.at(slot_w, L.pairs_n, w13 * 2.0 * tau ** 2)
        if slot_w.any():
            S = np.cumsum(slot_w[::-1])[::-1]
            block = S[np.maximum.outer(idx, idx)]
            H[:N, :N] += block
            H[N:2 * N, N:2 * N] += block
        vr2 = np.maximum(np.sum(self.v_ref ** 2, axis=1), 1.0)
        w15 = w[pos:pos + N] * 2.0 / vr2
        j = L.iup + idx
        H[j, j] += w15
        return H

    def program(self) -> SmoothProgram:
        A, b = self._equality()
        return SmoothProgram(self.layout.size, self.objective, self.ineq, self.ineq_hess, A, b,
                             values=self.ineq_values, fvalue=lambda x: self.objective_value(x))

    def pack(self, v, u, up, psi):
        return np.concatenate([v[:, 0], v[:, 1], u, up, psi if self.layout.use_psi else np.zeros(0)])


def _gamma(scenario: Scenario, schedule: Schedule) -> np.ndarray:
    """gamma_k^i[n] = p beta0 / (W N0) on scheduled entries, shape (K, N_F, N)."""
    return np.where(schedule.alpha > 0, schedule.p, 0.0) * scenario.beta0 / scenario.noise_power


def build_subproblem(scenario: Scenario, schedule: Schedule, state: ScaState, r_min: float | None = None,
                     check: bool = True) -> ConvexSubproblem:
    """Assemble the convex surrogate at the linearisation point held in ``state``."""
    sc = scenario
    N = sc.N
    gam = _gamma(sc, schedule)
    alpha = schedule.alpha
    active = (alpha * (gam > 0)).sum(axis=1) > 0  # (K, N)
    pk, pn = np.nonzero(active)
    v_ref = np.asarray(state.v_ref, dtype=float)
    t_ref = np.asarray(state.t_ref, dtype=float)
    if state.u_ref is None:
        diff = sc.users[pk] - t_ref[pn]
        u_ref = np.sum(diff * diff, axis=1) + sc.H ** 2
    else:
        u_ref = np.asarray(state.u_ref, dtype=float)
    if check:
        if np.any(np.linalg.norm(v_ref, axis=1) > sc.V_max * (1 + 1e-9)):
            raise ValueError("linearisation point violates the speed cap")
        if N > 1 and np.any(np.linalg.norm(np.diff(v_ref, axis=0), axis=1) > sc.V_acc * (1 + 1e-9)):
            raise ValueError("linearisation point violates the acceleration cap")
        if np.abs(sc.tau * v_ref.sum(axis=0) - (sc.end - sc.start)).max() > 1e-6 * (1 + np.abs(sc.end).max()):
            raise ValueError("linearisation point does not reach the final position")
    g_pairs = gam[pk, :, pn]  # (P, N_F)
    a_pairs = alpha[pk, :, pn]
    ur = u_ref[:, None]
    rate_a = sc.W * np.sum(a_pairs * np.log1p(g_pairs / ur), axis=1) / LN2
    rate_b = sc.W * np.sum(a_pairs * g_pairs / (ur * (ur + g_pairs)), axis=1) / LN2
    if np.isinf(sc.Gamma_th):
        leaky = np.zeros(0, dtype=int)
        gmax = np.zeros(0)
    else:
        gslot = gam.max(axis=(0, 1))
        leaky = np.nonzero(gslot > 0)[0]
        gmax = gslot[leaky]
    layout = _Layout(N, pk, pn, leaky, use_psi=sc.Q_E > 0)
    transmit = schedule.ptilde.sum(axis=(0, 1))
    r_min = sc.R_min if r_min is None else r_min
    return ConvexSubproblem(sc, layout, rate_a, rate_b, u_ref, gmax, transmit, t_ref, v_ref, r_min,
                            q2=state.q2)


def _start_point(sub: ConvexSubproblem, v, centred: bool = True) -> np.ndarray:
    """Interior point with velocities ``v``; slacks are pushed away from their bounds.

    The squared-distance slacks give up at most half of each user's rate
    margin (and at most 1 %), the speed slack sits 5 % below the tangent bound
    and ``psi`` minimises the certificate constraint for the given position.
    """
    sc = sub.scenario
    L = sub.layout
    t = sub.positions(v)
    diff = sc.users[L.pairs_k] - t[L.pairs_n]
    d2 = np.sum(diff * diff, axis=1) + sc.H ** 2
    u = d2 * (1 + START_SLACK)
    if centred and L.nu:
        rate = sub.user_rates(d2)
        loss = np.zeros(sc.K)
        np.add.at(loss, L.pairs_k, sub.rate_b * d2 / L.N)
        margin = rate - sub.r_min
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(loss > 0, 0.5 * margin / loss, 1e-2)
        frac = np.clip(frac, START_SLACK, 1e-2)
        u = d2 * (1 + frac[L.pairs_k])
    ub = np.sqrt(np.maximum(velocity_lower_bound(v, sub.v_ref), 0.0))
    ub = np.minimum(ub, np.linalg.norm(v, axis=1))
    shrink = 0.05 if centred else START_SLACK
    up = np.maximum(ub * (1 - shrink), 0.5 * (ub + UPSILON_MIN))
    up = np.maximum(up, UPSILON_MIN * (1 + START_SLACK))
    if L.use_psi:
        d = t[L.leaky] - sc.eaves
        D = np.linalg.norm(d, axis=1)
        # inside the ball the certificate is increasing in psi: stay near zero but keep half the slack
        g0 = D ** 2 - linearized_c(t[L.leaky], sub.t_ref[L.leaky], sub.gamma, sc)
        inside = np.clip(0.5 * np.maximum(-g0, 0.0) / sc.Q_E ** 2, 1e-12, PSI_FLOOR)
        psi = np.where(D > sc.Q_E * (1 + 1e-9), D / sc.Q_E - 1.0, inside)
    else:
        psi = np.zeros(0)
    return sub.pack(v, u, up, psi)


@dataclass
class TrajectoryResult:
    plan: FlightPlan
    q2: float
    state: ScaState
    rmin_relaxed: int = 0
    newton_steps: int = 0
    solves: int = 0
    converged: bool = False


def _extract(sub: ConvexSubproblem, x) -> FlightPlan:
    sc = sub.scenario
    v, _, _, psi = sub.split(x)
    plan = FlightPlan.from_velocities(sc.start, v, sc.tau)
    plan.t[-1] = sc.end
    diff = sc.users[:, None, :] - plan.slot_positions[None, :, :]
    plan.u = np.sum(diff * diff, axis=-1) + sc.H ** 2
    plan.upsilon = np.linalg.norm(v, axis=1)
    full_psi = np.zeros(sc.N)
    if sub.layout.use_psi and len(sub.layout.leaky):
        full_psi[sub.layout.leaky] = psi
    plan.psi = full_psi
    return plan


def _ratio(sub: ConvexSubproblem, x) -> float:
    v, u, up, _ = sub.split(x)
    return sub.avg_rate(u) / sub.avg_power(v, up)


def sca_dinkelbach_trajectory(scenario: Scenario, schedule: Schedule, init_plan: FlightPlan,
                              settings: BarrierSettings = SETTINGS) -> TrajectoryResult:
    """Improve the plan for a fixed schedule; returns the plan and the final surrogate ratio ``q2``.

    Inner loop: Dinkelbach updates of ``q2`` on one surrogate.  Outer loop:
    relinearise at the best point found so far until ``q2`` stalls.  Every
    barrier solve starts from a re-centred interior point at the incumbent
    velocities; solves after the first begin at a small barrier weight.
    """
    sc = scenario
    it = sc.iter
    v0 = np.array(init_plan.v, dtype=float)
    state = ScaState(q2=0.0, t_ref=sc.start + sc.tau * np.cumsum(v0, axis=0), v_ref=v0)

    # the first surrogate needs an interior; relax R_min only if the tangent bound removes it
    r_min = sc.R_min
    relaxed = 0
    while True:
        sub = build_subproblem(sc, schedule, state, r_min=r_min)
        x = _start_point(sub, v0)
        if np.all(sub.ineq_values(x) < 0):
            break
        if relaxed >= MAX_RELAX:
            g = sub.ineq_values(x)
            raise TrajectoryError(f"no strictly feasible start after {relaxed} R_min relaxations "
                                  f"(worst constraint value {g.max():.3e})")
        relaxed += 1
        r_min *= RELAX_FACTOR
    state.u_ref = sub.u_ref

    warm = dataclasses.replace(settings, mu0=min(settings.mu0, WARM_MU0))
    steps = solves = 0
    q2 = 0.0
    best_x, best_sub = x, sub
    q2_best = _ratio(sub, x)
    converged = False
    for j in range(1, it.J_max_algo2 + 1):
        state.j_algo2 = j
        q_prev_outer = q2_best
        for ji in range(1, it.J_inner_max_algo2 + 1):
            state.j_inner = ji
            start = _start_point(sub, best_sub.split(best_x)[0])
            if not np.all(sub.ineq_values(start) < 0):
                start = best_x  # re-centring can cross a tight boundary; the incumbent is interior
            sub.q2 = q2
            xv, xu, xup, _ = sub.split(start)
            sub.scale = max(sub.avg_rate(xu) + q2 * sub.avg_power(xv, xup), 1e-12)
            try:
                res = barrier_solve(sub.program(), start, settings if solves == 0 else warm)
            except BarrierError as exc:
                raise TrajectoryError(f"SCA iteration {j}, Dinkelbach iteration {ji}: {exc}") from exc
            steps += res.newton_steps
            solves += 1
            q_new = _ratio(sub, res.x)
            if q_new >= q2_best:
                q2_best = q_new
                best_x, best_sub = res.x, sub
            done = q_new - q2 <= it.eps_tol * max(abs(q_new), 1e-300)
            q2 = max(q2, q_new)
            if done:
                break
        state.q2 = q2_best
        state.trace.append(q2_best)
        if abs(q2_best - q_prev_outer) < it.eps_tol * q2_best:
            converged = True
            break
        if j == it.J_max_algo2:
            break
        # relinearise at the best surrogate solution
        bv, bu, _, _ = best_sub.split(best_x)
        state.v_ref = bv
        state.t_ref = best_sub.positions(bv)
        state.u_ref = bu
        sub = build_subproblem(sc, schedule, state, r_min=r_min, check=False)
        if not np.all(sub.ineq_values(best_x) < 0):
            raise TrajectoryError(f"SCA iteration {j}: relinearised point lost strict feasibility")
        best_sub = sub
        q2 = q2_best
    return TrajectoryResult(_extract(best_sub, best_x), q2_best, state, relaxed, steps, solves, converged)

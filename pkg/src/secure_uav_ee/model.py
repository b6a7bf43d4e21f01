"""Domain types and closed-form physics for the secure UAV-OFDMA downlink.

All quantities are SI: W, Hz, m, s, bit.  Positions are horizontal 2-D
coordinates; the UAV flies at the fixed altitude ``H``.  Slot ``n`` (1-based)
is served from position ``t[n]``, reached from ``t[n-1]`` with velocity
``v[n]`` (stored at ``v[n-1]`` in 0-based arrays).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)

#: Hard speed floor for the rotary-wing power model (induced term diverges at hover).
EPS_SPEED = 1e-2
#: Lower bound on the speed slack used by the trajectory solver.
UPSILON_MIN = 1e-3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class FlightParams:
    """Rotary-wing power constants (blade profile, induced, parasite)."""

    Omega: float = 400.0
    r: float = 0.5
    rho: float = 1.225
    s: float = 0.05
    A: float = 0.79
    P_o: float = 580.65
    P_i: float = 790.67
    v0: float = 7.2
    d0: float = 0.3

    @property
    def parasite_coef(self) -> float:
        return 0.5 * self.d0 * self.rho * self.s * self.A

    @property
    def profile_coef(self) -> float:
        return 3.0 * self.P_o / (self.Omega * self.r) ** 2


@dataclass(frozen=True)
class IterParams:
    G_max_algo1: int = 10
    J_max_algo2: int = 10
    J_inner_max_algo2: int = 20
    L_max_algo3: int = 8
    eps_tol: float = 1e-3
    g_inner_max: int = 500


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.  Defaults give the full-size reference scenario."""

    K: int = 3
    N_F: int = 128
    N: int = 50
    tau: float = 2.0
    H: float = 100.0
    user_positions: tuple = ((700.0, 900.0), (900.0, 900.0), (900.0, 700.0))
    eaves_estimate: tuple = (400.0, 400.0)
    Q_E: float = 100.0
    t0: tuple = (0.0, 0.0)
    tF: tuple = (1000.0, 1000.0)
    W: float = 7.8e3
    N0: float = 1e-14  # -110 dBm/Hz
    beta0: float = 1e-5
    P_peak: float = 1.0
    P_max: float = 10.0 ** 3.5  # 65 dBm
    P_C: float = 1.0  # 30 dBm
    R_min: float = 10.0
    Gamma_th: float = 1e-4
    V_max: float = 50.0
    V_acc: float = 5.0
    flight: FlightParams = field(default_factory=FlightParams)
    iter: IterParams = field(default_factory=IterParams)

    def __post_init__(self):
        # normalise sequences to tuples of floats so the instance stays hashable
        users = tuple(tuple(float(c) for c in p) for p in self.user_positions)
        object.__setattr__(self, "user_positions", users)
        for name in ("eaves_estimate", "t0", "tF"):
            object.__setattr__(self, name, tuple(float(c) for c in getattr(self, name)))

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @property
    def users(self) -> np.ndarray:
        return np.array(self.user_positions, dtype=float).reshape(-1, 2)

    @property
    def eaves(self) -> np.ndarray:
        return np.array(self.eaves_estimate, dtype=float)

    @property
    def start(self) -> np.ndarray:
        return np.array(self.t0, dtype=float)

    @property
    def end(self) -> np.ndarray:
        return np.array(self.tF, dtype=float)

    @property
    def noise_power(self) -> float:
        """Noise power in one subcarrier, W."""
        return self.W * self.N0

    @property
    def leak_coef(self) -> float:
        """Per-subcarrier power allowed per m² of eavesdropper distance."""
        return self.noise_power * self.Gamma_th / self.beta0


@dataclass
class Schedule:
    """Scheduling fractions and per-subcarrier powers, shape (K, N_F, N)."""

    alpha: np.ndarray
    p: np.ndarray

    @property
    def ptilde(self) -> np.ndarray:
        return self.alpha * self.p

    @classmethod
    def zeros(cls, scenario: Scenario) -> "Schedule":
        shape = (scenario.K, scenario.N_F, scenario.N)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class FlightPlan:
    """Trajectory ``t`` (N+1, 2), velocities ``v`` (N, 2) and solver slacks."""

    t: np.ndarray
    v: np.ndarray
    u: np.ndarray | None = None
    upsilon: np.ndarray | None = None
    psi: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.v.shape[0]

    @property
    def slot_positions(self) -> np.ndarray:
        """Positions t[1..N] at which slots are served."""
        return self.t[1:]

    @classmethod
    def from_velocities(cls, t0, v, tau: float, **slacks) -> "FlightPlan":
        v = np.asarray(v, dtype=float)
        t = np.vstack([np.asarray(t0, dtype=float)[None, :],
                       np.asarray(t0, dtype=float) + tau * np.cumsum(v, axis=0)])
        return cls(t=t, v=v, **slacks)


@dataclass
class Solution:
    schedule: Schedule
    plan: FlightPlan
    ee: float
    feasible: dict = field(default_factory=dict)


def straight_line_plan(scenario: Scenario) -> FlightPlan:
    """Constant-velocity plan from ``t0`` to ``tF``."""
    vel = (scenario.end - scenario.start) / (scenario.N * scenario.tau)
    v = np.tile(vel, (scenario.N, 1))
    t = scenario.start + np.outer(np.arange(scenario.N + 1), vel) * scenario.tau
    t[-1] = scenario.end
    return FlightPlan(t=t, v=v)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def channel_gain(t_uav, t_user, H: float, beta0: float):
    """Free-space LoS power gain ``beta0 / (|t_user - t_uav|^2 + H^2)``."""
    t_uav = np.asarray(t_uav, dtype=float)
    t_user = np.asarray(t_user, dtype=float)
    _check_finite(t_uav, t_user, H, beta0)
    if H <= 0 or beta0 <= 0:
        raise ValueError("H and beta0 must be positive")
    d2 = np.sum((t_user - t_uav) ** 2, axis=-1) + H * H
    return beta0 / d2


def user_distance_sq(scenario: Scenario, plan: FlightPlan) -> np.ndarray:
    """Squared UAV-user distances, shape (K, N)."""
    diff = scenario.users[:, None, :] - plan.slot_positions[None, :, :]
    return np.sum(diff**2, axis=-1) + scenario.H**2


def gains(scenario: Scenario, plan: FlightPlan) -> np.ndarray:
    """Channel gains h_k[n], shape (K, N)."""
    return scenario.beta0 / user_distance_sq(scenario, plan)


def link_rate(alpha, ptilde, h, W_hz: float, N0: float):
    """Time-shared rate ``W a log2(1 + pt h / (W N0 a))``; zero where ``a == 0``."""
    alpha = np.asarray(alpha, dtype=float)
    ptilde = np.asarray(ptilde, dtype=float)
    if np.any(ptilde < 0):
        raise ValueError("negative power")
    snr_num = ptilde * np.asarray(h, dtype=float) / (W_hz * N0)
    safe = np.where(alpha > 0, alpha, 1.0)
    big = snr_num > safe
    s_big = np.where(big, snr_num, 1.0)
    # a log1p(s/a) without overflowing s/a when a is tiny: log(s/a) + log1p(a/s) for s > a
    log_term = np.where(big, np.log(s_big) - np.log(safe) + np.log1p(safe / s_big),
                        np.log1p(np.where(big, 0.0, snr_num) / safe))
    rate = W_hz * alpha * log_term / LN2
    out = np.where(alpha > 0, rate, 0.0)
    return float(out) if out.ndim == 0 else out


def snr_leakage(p, beta0: float, W_hz: float, N0: float, dE_sq, H: float | None = None):
    """SNR seen by an eavesdropper at squared distance ``dE_sq``."""
    dE_sq = np.asarray(dE_sq, dtype=float)
    if H is not None and np.any(dE_sq < H * H * (1 - 1e-12)):
        raise ValueError("eavesdropper distance below altitude")
    out = np.asarray(p, dtype=float) * beta0 / (W_hz * N0 * dE_sq)
    return float(out) if out.ndim == 0 else out


def flight_power(v, flight: FlightParams = FlightParams(), eps_speed: float = EPS_SPEED):
    """Rotary-wing propulsion power for velocity vector(s) ``v`` (..., 2)."""
    speed = np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
    if np.any(speed < eps_speed):
        raise ValueError(f"speed below hover floor {eps_speed} m/s")
    return flight_power_speed(speed, flight)


def flight_power_speed(speed, flight: FlightParams = FlightParams()):
    speed = np.asarray(speed, dtype=float)
    out = (flight.P_o + flight.profile_coef * speed**2
           + flight.P_i * flight.v0 / speed + flight.parasite_coef * speed**3)
    return float(out) if out.ndim == 0 else out


def total_power(scenario: Scenario, schedule: Schedule, v) -> np.ndarray:
    """Per-slot total power: transmit + circuit + flight, shape (N,)."""
    transmit = schedule.ptilde.sum(axis=(0, 1))
    return transmit + scenario.P_C + flight_power(v, scenario.flight)


def slot_rates(scenario: Scenario, schedule: Schedule, plan: FlightPlan) -> np.ndarray:
    """Rates R_k^i[n], shape (K, N_F, N), bit/s."""
    h = gains(scenario, plan)[:, None, :]
    return link_rate(schedule.alpha, schedule.ptilde, h, scenario.W, scenario.N0)


def user_average_rates(scenario: Scenario, schedule: Schedule, plan: FlightPlan) -> np.ndarray:
    return slot_rates(scenario, schedule, plan).sum(axis=(1, 2)) / scenario.N


def energy_efficiency(schedule: Schedule, plan: FlightPlan, scenario: Scenario) -> float:
    """Average sum rate over average total power, bit/J."""
    rates = slot_rates(scenario, schedule, plan)
    power = total_power(scenario, schedule, plan.v)
    return float(rates.sum() / power.sum())


@dataclass
class ScenarioDiagnostics:
    violations: list
    secrecy_ok: bool
    secrecy_margin: float

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_scenario(scenario: Scenario) -> ScenarioDiagnostics:
    """List every violated scenario invariant plus the rate-vs-leakage secrecy flag."""
    s = scenario
    bad = []

    def need(cond, msg):
        if not cond:
            bad.append(msg)

    need(s.K >= 1, "K must be >= 1")
    need(s.N_F >= 1, "N_F must be >= 1")
    need(s.N >= 2, "N must be >= 2")
    need(s.users.shape == (s.K, 2), "user_positions must hold K coordinates")
    for name in ("tau", "H", "W", "N0", "beta0", "V_max", "V_acc"):
        need(getattr(s, name) > 0, f"{name} must be > 0")
    need(s.Q_E >= 0, "Q_E must be >= 0")
    need(s.P_peak > 0, "P_peak must be > 0")
    need(s.P_peak <= s.P_max, "P_peak must not exceed P_max")
    need(s.P_C >= 0, "P_C must be >= 0")
    need(s.R_min >= 0, "R_min must be >= 0")
    need(s.Gamma_th >= 0, "Gamma_th must be >= 0")
    dist = float(np.linalg.norm(s.end - s.start))
    need(dist <= s.N * s.tau * s.V_max, "reachability: |tF - t0| exceeds N * tau * V_max")
    numeric = [s.tau, s.H, s.W, s.N0, s.beta0, s.P_peak, s.P_max, s.P_C, s.R_min, s.Q_E,
               s.V_max, s.V_acc, *s.eaves, *s.start, *s.end, *s.users.ravel()]
    need(all(math.isfinite(x) for x in numeric), "all numeric fields must be finite")
    it = s.iter
    need(min(it.G_max_algo1, it.J_max_algo2, it.J_inner_max_algo2, it.L_max_algo3,
             it.g_inner_max) >= 1, "iteration caps must be >= 1")
    need(it.eps_tol > 0, "eps_tol must be > 0")

    from .alternate import secrecy_guarantee_check

    ok, margin = secrecy_guarantee_check(s)
    return ScenarioDiagnostics(bad, ok, margin)

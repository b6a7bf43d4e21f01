"""Log-barrier interior-point solver for small smooth convex programs.

Minimises ``f(x)`` subject to ``g_i(x) <= 0`` and ``A x = b`` from a strictly
feasible start.  Equality constraints enter the Newton system through a small Schur complement,
so each step costs one dense Cholesky factorisation of the barrier Hessian.
Inequality Jacobians may be dense arrays or scipy sparse matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class BarrierError(RuntimeError):
    pass


class InfeasibleStartError(BarrierError):
    """The supplied starting point is not strictly feasible."""


class NewtonFailure(BarrierError):
    """Newton's method produced non-finite values or the line search stalled."""


@dataclass
class SmoothProgram:
    """Convex program in callback form.

    ``objective(x) -> (f, grad, hess)``;
    ``ineq(x) -> (g, jac)`` with ``g`` of shape (m,) and ``jac`` (m, n), dense or sparse;
    ``ineq_hess(x, w) -> sum_i w_i hess g_i(x)``.
    """

    n: int
    objective: Callable
    ineq: Callable
    ineq_hess: Callable
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    #: optional cheap callbacks returning only ``g(x)`` and ``f(x)`` (used by the line search)
    values: Callable | None = None
    fvalue: Callable | None = None

    def g_values(self, x):
        return self.values(x) if self.values is not None else self.ineq(x)[0]

    def f_value(self, x):
        return self.fvalue(x) if self.fvalue is not None else self.objective(x)[0]


@dataclass(frozen=True)
class BarrierSettings:
    mu0: float = 1.0
    kappa: float = 0.2
    newton_tol: float = 1e-8
    max_newton: int = 80
    feas_tol: float = 1e-8
    gap_tol: float = 1e-9
    max_stages: int = 60
    #: stop centring when ``dec2 / (2 mu) <= newton_tol`` (True) or ``dec2 / 2 <= newton_tol`` (False);
    #: the scaled test also centres the multipliers, the absolute one is cheaper for well-scaled objectives
    scaled_newton: bool = True


@dataclass
class BarrierResult:
    x: np.ndarray
    status: str  # "optimal" | "max_iterations"
    newton_steps: int
    gap: float
    stage_objectives: list = field(default_factory=list)
    multipliers: np.ndarray | None = None
    eq_multipliers: np.ndarray | None = None


def _newton_direction(H, grad, A):
    """Equality-constrained Newton step: solve [H A'; A 0][dx; nu] = [-grad; 0]."""
    n = H.shape[0]
    try:
        cf = sla.cho_factor(H, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        reg = 1e-10 * max(1.0, float(np.abs(np.diag(H)).max()))
        cf = sla.cho_factor(H + reg * np.eye(n), lower=True, check_finite=False)
    hg = sla.cho_solve(cf, grad, check_finite=False)
    if A is None or A.size == 0:
        return -hg, np.zeros(0)
    hA = sla.cho_solve(cf, A.T, check_finite=False)
    S = A @ hA
    nu = np.linalg.solve(S, -(A @ hg))
    dx = -hg - hA @ nu
    return dx, nu


def _jt_diag_j(J, d):
    if sp.issparse(J):
        return (J.T @ sp.diags(d) @ J).toarray()
    return (J.T * d) @ J


def barrier_solve(prog: SmoothProgram, x0, settings: BarrierSettings = BarrierSettings()) -> BarrierResult:
    """Solve ``prog`` from the strictly feasible point ``x0``.

    Raises :class:`InfeasibleStartError` for a bad start and
    :class:`NewtonFailure` when Newton produces non-finite values.  Running
    out of barrier stages is reported through ``status``.
    """
    x = np.array(x0, dtype=float)
    g0, _ = prog.ineq(x)
    if g0.size and not np.all(g0 < 0):
        worst = int(np.argmax(g0))
        raise InfeasibleStartError(f"start violates inequality {worst}: g = {g0[worst]:.3e}")
    A = None if prog.A is None else np.atleast_2d(np.asarray(prog.A, dtype=float))
    if A is not None and A.size:
        res = np.abs(A @ x - prog.b)
        if np.any(res > settings.feas_tol * (1.0 + np.abs(prog.b))):
            raise InfeasibleStartError(f"start violates equalities by {res.max():.3e}")
    m = g0.size
    mu = settings.mu0
    steps = 0
    stage_obj = []
    nu = np.zeros(0 if A is None else A.shape[0])

    def merit(xv):
        gv = prog.g_values(xv)
        if gv.size and not np.all(gv < 0):
            return np.inf
        return prog.f_value(xv) - mu * np.sum(np.log(-gv))

    status = "max_iterations"
    for _stage in range(settings.max_stages):
        for _ in range(settings.max_newton):
            _, gf, Hf = prog.objective(x)
            gv, J = prog.ineq(x)
            inv = -1.0 / gv
            grad = gf + mu * (J.T @ inv)
            H = Hf + mu * (_jt_diag_j(J, inv**2) + prog.ineq_hess(x, inv))
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(H))):
                raise NewtonFailure(f"non-finite derivatives after {steps} Newton steps")
            dx, nu = _newton_direction(0.5 * (H + H.T), grad, A)
            if not np.all(np.isfinite(dx)):
                raise NewtonFailure(f"non-finite Newton step after {steps} steps")
            dec2 = float(-grad @ dx)
            steps += 1
            if dec2 <= 0 or dec2 / (2.0 * (mu if settings.scaled_newton else 1.0)) <= settings.newton_tol:
                break
            phi0 = merit(x)
            s = 1.0
            accepted = False
            for _ls in range(60):
                xn = x + s * dx
                phin = merit(xn)
                if np.isfinite(phin) and phin <= phi0 - 0.25 * s * dec2:
                    accepted = True
                    break
                s *= 0.5
            if not accepted:
                break  # no progress possible at this barrier weight
            x = xn
        stage_obj.append(float(prog.f_value(x)))
        if m * mu <= settings.gap_tol:
            status = "optimal"
            break
        mu *= settings.kappa
    if not np.all(np.isfinite(x)):
        raise NewtonFailure("non-finite iterate")
    gv, _ = prog.ineq(x)
    lam = mu / -gv if m else np.zeros(0)
    return BarrierResult(x=x, status=status, newton_steps=steps, gap=m * mu, stage_objectives=stage_obj,
                         multipliers=lam, eq_multipliers=nu)


def kkt_residual(prog: SmoothProgram, x, lam, nu=None) -> dict:
    """Stationarity, primal feasibility and complementarity at ``(x, lam, nu)``."""
    _, gf, _ = prog.objective(x)
    gv, J = prog.ineq(x)
    r = gf + J.T @ lam
    if prog.A is not None and np.size(prog.A):
        A = np.atleast_2d(prog.A)
        if nu is None or len(nu) != A.shape[0]:
            nu = np.linalg.lstsq(A.T, -r, rcond=None)[0]
        r = r + A.T @ nu
        eq = float(np.abs(A @ x - prog.b).max())
    else:
        eq = 0.0
    return {
        "stationarity": float(np.linalg.norm(r) / (1.0 + np.linalg.norm(gf))),
        "primal": float(max(gv.max(initial=-np.inf), 0.0)),
        "equality": eq,
        "complementarity": float(np.abs(lam * gv).sum()),
    }


def psd_check(M, rtol: float = 1e-9) -> bool:
    """True iff the symmetric matrix ``M`` is positive semidefinite up to ``rtol * |M|``."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError("matrix is not symmetric")
    lmin = np.linalg.eigvalsh(M)[0]
    return bool(lmin >= -rtol * np.linalg.norm(M, 2))


def ball_project(point, center, radius: float) -> np.ndarray:
    """Euclidean projection of ``point`` onto the closed ball."""
    point = np.asarray(point, dtype=float)
    center = np.asarray(center, dtype=float)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    d = point - center
    dist = np.linalg.norm(d)
    if dist <= radius:
        return point.copy()
    return center + d * (radius / dist)

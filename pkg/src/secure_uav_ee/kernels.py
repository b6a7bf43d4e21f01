"""Per-slot Layer-1 kernel of the scheduling dual decomposition.

Given the rate weights ``1 + omega_k``, the Dinkelbach ratio ``q`` and a
per-slot transmit budget, every slot is solved exactly: each user's
per-subcarrier power is the capped water-filling level, subcarriers go to
the user with the largest Lagrangian value (assignment mode) or follow fixed
counts, and the slot budget multiplier is found by bisection.

Two implementations share one contract: a numba loop kernel and a
vectorised numpy kernel.  ``layer1`` dispatches on ``_accel.USE_NUMBA``.
"""

import math

import numpy as np

from . import _accel

LN2 = math.log(2.0)
N_BISECT = 100
MAX_DOUBLING = 2000


# ---------------------------------------------------------------- numpy path

def _power_np(hp, weight, q, theta, lam, cap, N_slots, W):
    Theta = q + N_slots * (theta + lam)  # (N,)
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(Theta > 0, weight[:, None] * W / (np.where(Theta > 0, Theta, 1.0) * LN2), np.inf)
        inv = np.where(hp > 0, 1.0 / np.where(hp > 0, hp, 1.0), np.inf)
        p = np.minimum(np.maximum(level - inv, 0.0), cap[None, :])
    p = np.where(hp > 0, p, 0.0)
    p = np.where(np.isnan(p), 0.0, p)
    return p, Theta


def _value_np(p, hp, weight, Theta, N_slots, W):
    with np.errstate(invalid="ignore"):
        gain = weight[:, None] / N_slots * W * np.log1p(p * hp) / LN2
        cost = np.where(Theta[None, :] > 0, Theta[None, :] * p / N_slots, 0.0)
    return gain - cost


def _counts_np(p, hp, weight, Theta, N_slots, W, n_sub):
    val = _value_np(p, hp, weight, Theta, N_slots, W)
    win = np.argmax(val, axis=0)  # first max -> lowest index
    best = val[win, np.arange(val.shape[1])]
    counts = np.zeros(p.shape, dtype=np.int64)
    sel = best >= 0
    counts[win[sel], np.nonzero(sel)[0]] = n_sub
    return counts


def _slot_sum(p, counts):
    with np.errstate(invalid="ignore"):
        s = np.where(counts > 0, counts * p, 0.0).sum(axis=0)
    return s


def layer1_numpy(hp, weight, q, theta, cap, budget, counts, assign, n_sub, N_slots, W):
    K, N = hp.shape
    lam0 = np.zeros(N)

    def evaluate(lam):
        p, Theta = _power_np(hp, weight, q, theta, lam, cap, N_slots, W)
        c = _counts_np(p, hp, weight, Theta, N_slots, W, n_sub) if assign else counts
        return p, c, _slot_sum(p, c)

    p, c, s = evaluate(lam0)
    need = s > budget
    lo = np.zeros(N)
    hi = np.where(need, 1.0, 0.0)
    if need.any():
        for _ in range(MAX_DOUBLING):
            _, _, s_hi = evaluate(hi)
            bad = need & (s_hi > budget)
            if not bad.any():
                break
            lo = np.where(bad, hi, lo)
            hi = np.where(bad, hi * 2.0, hi)
        for _ in range(N_BISECT):
            mid = np.where(need, 0.5 * (lo + hi), 0.0)
            _, _, s_mid = evaluate(mid)
            over = s_mid > budget
            lo = np.where(need & over, mid, lo)
            hi = np.where(need & ~over, mid, hi)
        p, c, s = evaluate(hi)
    return p, c, hi


# ---------------------------------------------------------------- numba path

def _slot_eval(hp, weight, q, theta_n, lam, cap_n, N_slots, W, n, counts_in, assign, n_sub, p_out, c_out):
    K = hp.shape[0]
    Theta = q + N_slots * (theta_n + lam)
    best = -np.inf
    win = -1
    for k in range(K):
        h = hp[k, n]
        if h > 0:
            if Theta > 0:
                level = weight[k] * W / (Theta * LN2)
            else:
                level = np.inf
            pk = level - 1.0 / h
            if pk < 0.0:
                pk = 0.0
            if pk > cap_n:
                pk = cap_n
            if pk != pk:
                pk = 0.0
        else:
            pk = 0.0
        p_out[k] = pk
        if assign:
            v = weight[k] / N_slots * W * math.log1p(pk * h) / LN2
            if Theta > 0:
                v -= Theta * pk / N_slots
            if v > best:
                best = v
                win = k
    total = 0.0
    for k in range(K):
        if assign:
            c_out[k] = n_sub if (k == win and best >= 0) else 0
        else:
            c_out[k] = counts_in[k, n]
        if c_out[k] > 0:
            total += c_out[k] * p_out[k]
    return total


def layer1_loops(hp, weight, q, theta, cap, budget, counts, assign, n_sub, N_slots, W):
    K, N = hp.shape
    p = np.zeros((K, N))
    c = np.zeros((K, N), dtype=np.int64)
    lam_out = np.zeros(N)
    p_buf = np.zeros(K)
    c_buf = np.zeros(K, dtype=np.int64)
    for n in range(N):
        s = _slot_eval(hp, weight, q, theta[n], 0.0, cap[n], N_slots, W, n, counts, assign, n_sub, p_buf, c_buf)
        lam = 0.0
        if s > budget[n]:
            lo = 0.0
            hi = 1.0
            for _ in range(MAX_DOUBLING):
                s_hi = _slot_eval(hp, weight, q, theta[n], hi, cap[n], N_slots, W, n, counts, assign, n_sub,
                                  p_buf, c_buf)
                if not (s_hi > budget[n]):
                    break
                lo = hi
                hi = hi * 2.0
            for _ in range(N_BISECT):
                mid = 0.5 * (lo + hi)
                s_mid = _slot_eval(hp, weight, q, theta[n], mid, cap[n], N_slots, W, n, counts, assign, n_sub,
                                   p_buf, c_buf)
                if s_mid > budget[n]:
                    lo = mid
                else:
                    hi = mid
            lam = hi
            _slot_eval(hp, weight, q, theta[n], lam, cap[n], N_slots, W, n, counts, assign, n_sub, p_buf, c_buf)
        for k in range(K):
            p[k, n] = p_buf[k]
            c[k, n] = c_buf[k]
        lam_out[n] = lam
    return p, c, lam_out


if _accel.USE_NUMBA:
    _slot_eval = _accel.njit(cache=True)(_slot_eval)
    layer1_numba = _accel.njit(cache=True)(layer1_loops)
else:
    layer1_numba = None


def layer1(hp, weight, q, theta, cap, budget, counts=None, assign=True, n_sub=1, N_slots=1, W=1.0,
           backend=None):
    """Solve Layer 1 for every slot.

    Returns per-subcarrier powers ``p`` (K, N), subcarrier counts (K, N) and
    the slot budget multiplier (N,).
    """
    hp = np.ascontiguousarray(hp, dtype=np.float64)
    K, N = hp.shape
    if counts is None:
        counts = np.zeros((K, N), dtype=np.int64)
    args = (hp, np.ascontiguousarray(weight, dtype=np.float64), float(q),
            np.ascontiguousarray(theta, dtype=np.float64), np.ascontiguousarray(cap, dtype=np.float64),
            np.ascontiguousarray(budget, dtype=np.float64), np.ascontiguousarray(counts, dtype=np.int64),
            bool(assign), int(n_sub), int(N_slots), float(W))
    if backend is None:
        backend = "numba" if layer1_numba is not None else "numpy"
    if backend == "numba":
        if layer1_numba is None:
            raise RuntimeError("numba backend disabled")
        return layer1_numba(*args)
    if backend == "loops":
        return layer1_loops(*args)
    return layer1_numpy(*args)

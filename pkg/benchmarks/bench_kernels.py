"""Time the per-slot scheduling kernel: numba loops versus vectorised numpy.

    python benchmarks/bench_kernels.py [--slots 50] [--users 3] [--repeat 200]

Both backends are run on identical random inputs; the script checks they
agree before reporting timings.  With SECURE_UAV_NUMBA=0 only numpy runs.
"""

import argparse
import time

import numpy as np

from secure_uav_ee import kernels


def make_inputs(K, N, seed):
    rng = np.random.default_rng(seed)
    hp = 10.0 ** rng.uniform(2, 5, size=(K, N))
    weight = 1.0 + rng.uniform(0, 0.5, size=K)
    cap = 10.0 ** rng.uniform(-4, -1, size=N)
    budget = np.full(N, 0.05)
    return hp, weight, 0.3, np.zeros(N), cap, budget


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=50)
    ap.add_argument("--users", type=int, default=3)
    ap.add_argument("--subcarriers", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    hp, weight, q, theta, cap, budget = make_inputs(args.users, args.slots, args.seed)
    kw = dict(n_sub=args.subcarriers, N_slots=args.slots, W=7.8e3)
    backends = ["numpy"] + (["numba"] if kernels.layer1_numba is not None else [])

    ref = kernels.layer1(hp, weight, q, theta, cap, budget, backend="numpy", **kw)
    if "numba" in backends:
        got = kernels.layer1(hp, weight, q, theta, cap, budget, backend="numba", **kw)  # also compiles
        err = max(float(np.max(np.abs(a - b))) for a, b in zip(ref, got))
        print(f"max |numba - numpy| = {err:.3e}")

    times = {}
    for b in backends:
        times[b] = best_of(lambda b=b: kernels.layer1(hp, weight, q, theta, cap, budget, backend=b, **kw),
                           args.repeat)
        print(f"{b:6s} best of {args.repeat}: {times[b] * 1e6:9.1f} us")
    if len(times) == 2:
        print(f"speed-up: {times['numpy'] / times['numba']:.2f}x")


if __name__ == "__main__":
    main()

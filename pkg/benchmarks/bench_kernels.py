"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Compilation is excluded: every kernel is called once before timing.
"""
import argparse
import time

import numpy as np

from vmfgae.kernels import _numba as nb
from vmfgae.kernels import _numpy as npk


def cases(rng):
    n = 200_000
    beta = rng.beta(3.5, 3.5, size=n)
    unif = rng.random(n)
    pos = rng.random((20, 20)) + 0.05
    big = rng.random((200, 200)) + 0.05
    x = rng.random((100, 20))
    scores = rng.random(5000)
    labels = (rng.random(5000) < 0.3).astype(np.int64)
    return {
        "vmf_cosines (m=8, kappa=20, 1e5 draws)": lambda k: k.vmf_cosines(beta, unif, 20.0, 7.0, 100_000, 0),
        "sinkhorn 20x20": lambda k: k.sinkhorn(pos, 5000, 1e-9),
        "sinkhorn 200x200": lambda k: k.sinkhorn(big, 5000, 1e-9),
        "pairwise_sq_dists 100x100x20": lambda k: k.pairwise_sq_dists(x, x),
        "gaussian_gram 100x100x20": lambda k: k.gaussian_gram(x, x, 0.7),
        "mann_whitney_auc n=5000": lambda k: k.mann_whitney_auc(scores, labels),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        call(nb)
        call(npk)
        t_np = best_of(lambda: call(npk), args.repeat)
        t_nb = best_of(lambda: call(nb), args.repeat)
        print(f"{name:42s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()

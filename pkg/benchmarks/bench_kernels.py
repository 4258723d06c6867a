"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from neutral_hj import _kernels
from neutral_hj.histories import History, mollify


def best_of(fn, repeat):
    fn()  # warm-up (includes jit compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    samples = rng.normal(size=(200_000, 2))
    w = History.step(1.0, [-0.6, -0.3], [[-1.0, 0.5], [1.0, 0.0], [0.2, -0.4]])
    z = np.array([0.5, 0.5])
    a, b, v0, v1 = w.pieces()
    a, b = np.append(a, 0.0), np.append(b, 1.0)
    v0, v1 = np.vstack([v0, z]), np.vstack([v1, z])
    xi = np.linspace(-1.0, 0.0, 1025)

    cases = {
        "norm_moments (200k intervals)": lambda flag: _kernels.norm_moments(samples, use_numba=flag),
        "convolve_pieces (j=64, 1025 pts)": lambda flag: _kernels.convolve_pieces(a, b, v0, v1, xi, 64, use_numba=flag),
    }
    print(f"numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'kernel':36s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, fn in cases.items():
        t_np = best_of(lambda: fn(False), args.repeat)
        if _kernels.HAVE_NUMBA:
            t_nb = best_of(lambda: fn(True), args.repeat)
            print(f"{name:36s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}")
        else:
            print(f"{name:36s} {1e3 * t_np:11.2f} {'-':>11s}")

    t0 = time.perf_counter()
    mollify(z, w, 64)
    print(f"mollify(j=64) end to end: {1e3 * (time.perf_counter() - t0):.2f} ms")


if __name__ == "__main__":
    main()

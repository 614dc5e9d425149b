"""Time the compiled Jacobi kernel against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py --repeat 3
"""

import argparse
import time

import numpy as np

from jepa_score import _fallback

try:
    from jepa_score import _kernels
except ImportError:
    _kernels = None

# (batch, rows, cols): scoring batches for the grid cells, plus a single large matrix
CASES = [(256, 16, 64), (256, 16, 128), (2048, 2, 2), (64, 32, 32), (1, 256, 256)]


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'case':>16} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max rel diff':>13}")
    for case in CASES:
        mats = rng.standard_normal(case)
        t_py = best_time(lambda: _fallback.batched_singular_values(mats), args.repeat)
        if _kernels is None:
            print(f"{str(case):>16} {t_py:11.4f} {'n/a':>11}")
            continue
        t_cy = best_time(lambda: _kernels.batched_singular_values(mats), args.repeat)
        a = _fallback.batched_singular_values(mats)
        b = _kernels.batched_singular_values(mats)
        diff = np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))
        print(f"{str(case):>16} {t_py:11.4f} {t_cy:11.4f} {t_py / t_cy:7.1f}x {diff:13.2e}")
    if _kernels is None:
        print("compiled kernels not built; run `pip install --no-build-isolation -e .`")


if __name__ == "__main__":
    main()

"""Compare the numba and numpy kernel paths on representative inputs.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Both paths are
imported directly, so the ``DCSRD_DISABLE_NUMBA`` flag does not matter here.
"""

import argparse
import timeit

import numpy as np

from dcsrd import _kernels as K


def _lasso_problem(seed=0, m=128, n=512, k=16):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n)) / np.sqrt(m)
    theta = np.zeros(n)
    theta[rng.choice(n, k, replace=False)] = rng.normal(size=k)
    y = A @ theta + 1e-3 * rng.normal(size=m)
    step = 1.0 / np.linalg.norm(A, 2) ** 2
    lam = 0.01 * np.abs(A.T @ y).max()
    return A, np.ascontiguousarray(A.T), y, lam, np.zeros(n), step


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(1)

    A, AT, y, lam, x0, step = _lasso_problem()
    ys = rng.normal(scale=0.25, size=1_000_000)
    keys = rng.integers(-500, 500, size=1_000_000).astype(np.int64)

    cases = {
        "fista_lasso (128x512)": (
            lambda: K.fista_lasso_numba(A, AT, y, lam, x0, step, 1e-8, 10_000),
            lambda: K.fista_lasso_numpy(A, AT, y, lam, x0, step, 1e-8, 10_000),
        ),
        "quantize (1e6)": (
            lambda: K.quantize_numba(ys, 0.01),
            lambda: K.quantize_numpy(ys, 0.01),
        ),
        "count_sorted (1e6)": (
            lambda: K.count_sorted_numba(keys),
            lambda: K.count_sorted_numpy(keys),
        ),
    }
    print(f"numba available: {K.HAVE_NUMBA}")
    print(f"{'kernel':<24}{'numba ms':>12}{'numpy ms':>12}{'speed-up':>10}")
    for name, (fast, ref) in cases.items():
        fast()  # trigger compilation outside the timed region
        t_nb = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(ref, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{t_nb:>12.2f}{t_np:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()

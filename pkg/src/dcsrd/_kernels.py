"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``DCSRD_DISABLE_NUMBA`` is unset (or ``0``).  Both paths implement
the same arithmetic; the fallback exists for platforms without numba and as
an independent reference in the test-suite and benchmark.
"""

import os

import numpy as np

_FLAG = "DCSRD_DISABLE_NUMBA"


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


# ---------------------------------------------------------------------------
# FISTA for the penalized least-squares problem
#     min_theta  0.5 * ||A theta - y||^2 + lam * ||theta||_1
# with gradient-based adaptive restart.
# ---------------------------------------------------------------------------


def _fista_lasso_py(A, AT, y, lam, x0, step, tol, max_iter):
    x = x0.copy()
    z = x0.copy()
    t = 1.0
    thr = step * lam
    for it in range(max_iter):
        g = AT @ (A @ z - y)
        v = z - step * g
        xn = np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
        d = xn - x
        nd = np.sqrt(d @ d)
        nx = np.sqrt(xn @ xn)
        if (z - xn) @ d > 0.0:
            t = 1.0
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = xn + ((t - 1.0) / tn) * d
        x = xn
        t = tn
        if nd <= tol * max(nx, 1e-300):
            return x, it + 1
    return x, max_iter


def _fista_lasso_nb(A, AT, y, lam, x0, step, tol, max_iter):
    n = x0.shape[0]
    x = x0.copy()
    z = x0.copy()
    xn = np.empty(n)
    t = 1.0
    thr = step * lam
    for it in range(max_iter):
        g = AT @ (A @ z - y)
        nd2 = 0.0
        nx2 = 0.0
        restart = 0.0
        for i in range(n):
            v = z[i] - step * g[i]
            if v > thr:
                w = v - thr
            elif v < -thr:
                w = v + thr
            else:
                w = 0.0
            xn[i] = w
            di = w - x[i]
            nd2 += di * di
            nx2 += w * w
            restart += (z[i] - w) * di
        if restart > 0.0:
            t = 1.0
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / tn
        for i in range(n):
            z[i] = xn[i] + mom * (xn[i] - x[i])
            x[i] = xn[i]
        t = tn
        if np.sqrt(nd2) <= tol * max(np.sqrt(nx2), 1e-300):
            return x, it + 1
    return x, max_iter


# ---------------------------------------------------------------------------
# Midtread quantizer, ties rounded half away from zero.
# ---------------------------------------------------------------------------


def _quantize_py(y, step):
    return (np.sign(y) * np.floor(np.abs(y) / step + 0.5)).astype(np.int64)


def _quantize_nb(y, step):
    out = np.empty(y.shape[0], dtype=np.int64)
    for i in range(y.shape[0]):
        v = y[i] / step
        if v >= 0.0:
            out[i] = np.int64(np.floor(v + 0.5))
        else:
            out[i] = -np.int64(np.floor(-v + 0.5))
    return out


# ---------------------------------------------------------------------------
# Occurrence counting of int64 keys (sorted run-length).
# ---------------------------------------------------------------------------


def _count_sorted_py(keys):
    if keys.size == 0:
        return keys[:0].copy(), np.zeros(0, dtype=np.int64)
    k = np.sort(keys, kind="mergesort")
    edges = np.flatnonzero(np.diff(k)) + 1
    starts = np.concatenate(([0], edges))
    counts = np.diff(np.concatenate((starts, [k.size])))
    return k[starts], counts.astype(np.int64)


def _count_sorted_nb(keys):
    n = keys.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    k = np.sort(keys)
    uniq = np.empty(n, dtype=np.int64)
    cnt = np.empty(n, dtype=np.int64)
    j = 0
    uniq[0] = k[0]
    cnt[0] = 1
    for i in range(1, n):
        if k[i] == uniq[j]:
            cnt[j] += 1
        else:
            j += 1
            uniq[j] = k[i]
            cnt[j] = 1
    return uniq[: j + 1].copy(), cnt[: j + 1].copy()


if HAVE_NUMBA:
    fista_lasso_numba = numba.njit(cache=True)(_fista_lasso_nb)
    quantize_numba = numba.njit(cache=True)(_quantize_nb)
    count_sorted_numba = numba.njit(cache=True)(_count_sorted_nb)
else:  # pragma: no cover
    fista_lasso_numba = _fista_lasso_py
    quantize_numba = _quantize_py
    count_sorted_numba = _count_sorted_py

fista_lasso_numpy = _fista_lasso_py
quantize_numpy = _quantize_py
count_sorted_numpy = _count_sorted_py


def fista_lasso(A, AT, y, lam, x0, step, tol=1e-8, max_iter=10_000):
    """Run accelerated proximal gradient on the l1-penalized LS problem.

    Returns ``(theta, n_iter)``; ``n_iter == max_iter`` means the relative
    iterate change never dropped below ``tol``.
    """
    f = fista_lasso_numba if USE_NUMBA else fista_lasso_numpy
    return f(A, AT, y, float(lam), x0, float(step), float(tol), int(max_iter))


def quantize_symbols(y, step):
    f = quantize_numba if USE_NUMBA else quantize_numpy
    return f(np.ascontiguousarray(y, dtype=np.float64), float(step))


def count_keys(keys):
    """Unique int64 keys and their occurrence counts, sorted by key."""
    f = count_sorted_numba if USE_NUMBA else count_sorted_numpy
    return f(np.ascontiguousarray(keys, dtype=np.int64))

"""Batched quadrature contractions used by every assembly path.

Two interchangeable backends exist: numba-compiled loops and plain numpy
``einsum``.  The numba path is used when numba imports cleanly and the
environment variable ``FLUXDG_DISABLE_NUMBA`` is unset (or ``0``).
Both backends accumulate over quadrature points in the same order, so the
per-block results agree to rounding; blocks are independent, which keeps
the parallel numba loop deterministic for any thread count.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("FLUXDG_DISABLE_NUMBA", "0").lower() not in ("0", "", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by FLUXDG_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    # the bundled TBB is too old for numba's tbb layer; workqueue is always present
    numba.config.THREADING_LAYER = "workqueue"

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False


def weighted_outer_numpy(w, x, y):
    """out[f, a, b] = sum_q w[f, q] * x[f, q, a] * y[f, q, b]."""
    return np.einsum("fq,fqa,fqb->fab", w, x, y, optimize=True)


def weighted_moments_numpy(w, g, x):
    """out[f, a] = sum_q w[f, q] * g[f, q] * x[f, q, a]."""
    return np.einsum("fq,fq,fqa->fa", w, g, x, optimize=True)


if NUMBA_AVAILABLE:

    @njit(parallel=True, cache=True)
    def weighted_outer_numba(w, x, y):
        nf, nq, na = x.shape
        nb = y.shape[2]
        out = np.zeros((nf, na, nb))
        for f in prange(nf):
            for q in range(nq):
                wq = w[f, q]
                if wq == 0.0:
                    continue
                for a in range(na):
                    s = wq * x[f, q, a]
                    if s == 0.0:
                        continue
                    for b in range(nb):
                        out[f, a, b] += s * y[f, q, b]
        return out

    @njit(parallel=True, cache=True)
    def weighted_moments_numba(w, g, x):
        nf, nq, na = x.shape
        out = np.zeros((nf, na))
        for f in prange(nf):
            for q in range(nq):
                s = w[f, q] * g[f, q]
                for a in range(na):
                    out[f, a] += s * x[f, q, a]
        return out

    def set_threads(n: int) -> None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

    BACKEND = "numba"
    _outer = weighted_outer_numba
    _moments = weighted_moments_numba
else:

    def set_threads(n: int) -> None:
        pass

    BACKEND = "numpy"
    _outer = weighted_outer_numpy
    _moments = weighted_moments_numpy


def weighted_outer(w, x, y):
    w = np.ascontiguousarray(w, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if w.shape[0] == 0:
        return np.zeros((0, x.shape[2], y.shape[2]))
    return _outer(w, x, y)


def weighted_moments(w, g, x):
    w = np.ascontiguousarray(w, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if w.shape[0] == 0:
        return np.zeros((0, x.shape[2]))
    return _moments(w, g, x)

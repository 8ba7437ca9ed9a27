"""Compiled distance kernels shared by the stability estimators and the indexes.

Every pair is reduced independently of the batch it belongs to, so a distance
computed during an IVF probe is bitwise identical to the same distance in a
brute-force scan.
"""

import os

import numba
import numpy as np

# skip TBB probing (it warns on old system TBB); an explicit env choice still wins
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# metric codes understood by the compiled kernels
L1 = 0
L2 = 1
LP = 2
COSINE = 3


@numba.njit(cache=True, inline="always")
def pair_distance(code, p, x, y, nx, ny):
    """Distance between two rows; ``nx``/``ny`` are l2 norms (cosine only)."""
    m = x.shape[0]
    acc = 0.0
    if code == L2:
        for i in range(m):
            t = x[i] - y[i]
            acc += t * t
        return np.sqrt(acc)
    elif code == L1:
        for i in range(m):
            acc += abs(x[i] - y[i])
        return acc
    elif code == LP:
        for i in range(m):
            acc += abs(x[i] - y[i]) ** p
        return acc ** (1.0 / p)
    else:
        for i in range(m):
            acc += x[i] * y[i]
        r = 1.0 - acc / (nx * ny)
        # clamp rounding excursions outside the closed range
        if r < 0.0:
            r = 0.0
        elif r > 2.0:
            r = 2.0
        return r


@numba.njit(cache=True)
def row_norms(a):
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        acc = 0.0
        for j in range(a.shape[1]):
            acc += a[i, j] * a[i, j]
        out[i] = np.sqrt(acc)
    return out


@numba.njit(cache=True)
def vec_norm(x):
    """l2 norm accumulated in the same order as :func:`row_norms`."""
    acc = 0.0
    for j in range(x.shape[0]):
        acc += x[j] * x[j]
    return np.sqrt(acc)


@numba.njit(cache=True, parallel=True)
def pairwise(code, p, a, b, na, nb):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in numba.prange(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = pair_distance(code, p, a[i], b[j], na[i], nb[j])
    return out


@numba.njit(cache=True)
def to_rows(code, p, q, b, nq, nb, ids):
    """Distances from ``q`` to the rows ``b[ids]``."""
    out = np.empty(ids.shape[0])
    for t in range(ids.shape[0]):
        j = ids[t]
        out[t] = pair_distance(code, p, q, b[j], nq, nb[j])
    return out

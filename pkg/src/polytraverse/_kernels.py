"""Hot numeric kernels.

Each kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorised numpy version. Both follow the same pivot sequence, so results
agree to the last bit on the inputs exercised by the test-suite. The numpy
path is used when numba is missing or ``POLYTRAVERSE_DISABLE_JIT=1``.
"""
from __future__ import annotations

import numpy as np

from ._config import jit_disabled

try:  # pragma: no cover - exercised implicitly
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
STALLED = 3

_TIE = 1e-12


# ----------------------------------------------------------------------------
# dense two-phase simplex, Bland's rule
# ----------------------------------------------------------------------------


def _simplex_loops(A, b, c, max_iter, tol, feas_tol):
    m, n = A.shape
    n_art = 0
    for i in range(m):
        if b[i] < 0.0:
            n_art += 1
    ncol = n + m + n_art
    rhs = ncol
    T = np.zeros((m + 1, ncol + 1))
    basis = np.empty(m, dtype=np.int64)
    k = 0
    for i in range(m):
        sgn = 1.0
        if b[i] < 0.0:
            sgn = -1.0
        for j in range(n):
            T[i, j] = sgn * A[i, j]
        T[i, n + i] = sgn
        T[i, rhs] = sgn * b[i]
        if b[i] < 0.0:
            T[i, n + m + k] = 1.0
            basis[i] = n + m + k
            k += 1
        else:
            basis[i] = n + i

    obj = m
    iters = 0
    # phase 1: maximise -sum(artificials)
    if n_art > 0:
        for j in range(n + m, ncol):
            T[obj, j] = 1.0
        for i in range(m):
            if basis[i] >= n + m:
                for j in range(ncol + 1):
                    T[obj, j] -= T[i, j]
        status = OPTIMAL
        while True:
            enter = -1
            for j in range(ncol):
                if T[obj, j] < -tol:
                    enter = j
                    break
            if enter < 0:
                break
            if iters >= max_iter:
                status = STALLED
                break
            leave = -1
            best = 0.0
            for i in range(m):
                a = T[i, enter]
                if a > tol:
                    ratio = T[i, rhs] / a
                    if leave < 0 or ratio < best - _TIE:
                        leave = i
                        best = ratio
                    elif abs(ratio - best) <= _TIE and basis[i] < basis[leave]:
                        leave = i
                        best = ratio
            if leave < 0:
                # cannot happen: phase-1 objective is bounded by 0
                break
            _pivot_loops(T, leave, enter)
            basis[leave] = enter
            iters += 1
        if status == STALLED:
            return STALLED, np.zeros(n), 0.0, iters
        if T[obj, rhs] < -feas_tol:
            return INFEASIBLE, np.zeros(n), 0.0, iters
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= n + m:
                for j in range(n + m):
                    if abs(T[i, j]) > tol:
                        _pivot_loops(T, i, j)
                        basis[i] = j
                        break

    # phase 2
    for j in range(ncol + 1):
        T[obj, j] = 0.0
    for j in range(n):
        T[obj, j] = -c[j]
    for i in range(m):
        bi = basis[i]
        if bi < n:
            cb = c[bi]
            if cb != 0.0:
                for j in range(ncol + 1):
                    T[obj, j] += cb * T[i, j]
    while True:
        enter = -1
        for j in range(n + m):
            if T[obj, j] < -tol:
                enter = j
                break
        if enter < 0:
            break
        if iters >= max_iter:
            return STALLED, np.zeros(n), 0.0, iters
        leave = -1
        best = 0.0
        for i in range(m):
            a = T[i, enter]
            if a > tol:
                ratio = T[i, rhs] / a
                if leave < 0 or ratio < best - _TIE:
                    leave = i
                    best = ratio
                elif abs(ratio - best) <= _TIE and basis[i] < basis[leave]:
                    leave = i
                    best = ratio
        if leave < 0:
            return UNBOUNDED, np.zeros(n), 0.0, iters
        _pivot_loops(T, leave, enter)
        basis[leave] = enter
        iters += 1

    z = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            z[basis[i]] = T[i, rhs]
    return OPTIMAL, z, T[obj, rhs], iters


def _pivot_loops(T, r, col):
    rows, cols = T.shape
    p = T[r, col]
    for j in range(cols):
        T[r, j] = T[r, j] / p
    for i in range(rows):
        if i != r:
            f = T[i, col]
            if f != 0.0:
                for j in range(cols):
                    T[i, j] = T[i, j] - f * T[r, j]


def _choose_leave(T, basis, enter, rhs, tol):
    col = T[:-1, enter]
    rows = np.flatnonzero(col > tol)
    if rows.size == 0:
        return -1
    leave = -1
    best = 0.0
    ratios = T[rows, rhs] / col[rows]
    for i, ratio in zip(rows, ratios):
        if leave < 0 or ratio < best - _TIE:
            leave, best = i, ratio
        elif abs(ratio - best) <= _TIE and basis[i] < basis[leave]:
            leave, best = i, ratio
    return int(leave)


def _pivot_numpy(T, r, col):
    T[r] = T[r] / T[r, col]
    f = T[:, col].copy()
    f[r] = 0.0
    nz = np.flatnonzero(f)
    if nz.size:
        T[nz] -= f[nz, None] * T[r]


def _simplex_numpy(A, b, c, max_iter, tol, feas_tol):
    m, n = A.shape
    neg = b < 0.0
    n_art = int(neg.sum())
    ncol = n + m + n_art
    rhs = ncol
    T = np.zeros((m + 1, ncol + 1))
    sgn = np.where(neg, -1.0, 1.0)
    T[:m, :n] = sgn[:, None] * A
    T[np.arange(m), n + np.arange(m)] = sgn
    T[:m, rhs] = sgn * b
    basis = n + np.arange(m)
    art_rows = np.flatnonzero(neg)
    T[art_rows, n + m + np.arange(n_art)] = 1.0
    basis[art_rows] = n + m + np.arange(n_art)
    obj = m
    iters = 0

    if n_art:
        T[obj, n + m:ncol] = 1.0
        # row-by-row to keep the loop kernel's summation order
        for i in art_rows:
            T[obj] -= T[i]
        while True:
            cand = np.flatnonzero(T[obj, :ncol] < -tol)
            if cand.size == 0:
                break
            if iters >= max_iter:
                return STALLED, np.zeros(n), 0.0, iters
            enter = int(cand[0])
            leave = _choose_leave(T, basis, enter, rhs, tol)
            if leave < 0:
                break
            _pivot_numpy(T, leave, enter)
            basis[leave] = enter
            iters += 1
        if T[obj, rhs] < -feas_tol:
            return INFEASIBLE, np.zeros(n), 0.0, iters
        for i in range(m):
            if basis[i] >= n + m:
                cand = np.flatnonzero(np.abs(T[i, :n + m]) > tol)
                if cand.size:
                    _pivot_numpy(T, i, int(cand[0]))
                    basis[i] = int(cand[0])

    T[obj] = 0.0
    T[obj, :n] = -c
    for i in range(m):
        bi = basis[i]
        if bi < n and c[bi] != 0.0:
            T[obj] += c[bi] * T[i]
    while True:
        cand = np.flatnonzero(T[obj, :n + m] < -tol)
        if cand.size == 0:
            break
        if iters >= max_iter:
            return STALLED, np.zeros(n), 0.0, iters
        enter = int(cand[0])
        leave = _choose_leave(T, basis, enter, rhs, tol)
        if leave < 0:
            return UNBOUNDED, np.zeros(n), 0.0, iters
        _pivot_numpy(T, leave, enter)
        basis[leave] = enter
        iters += 1

    z = np.zeros(n)
    mask = basis < n
    z[basis[mask]] = T[:m, rhs][mask]
    return OPTIMAL, z, float(T[obj, rhs]), iters


# ----------------------------------------------------------------------------
# fused affine + ReLU layer with activation bits (used by grid scans)
# ----------------------------------------------------------------------------


def _relu_layer_loops(H, W, b):
    n, p = H.shape
    m = W.shape[0]
    out = np.empty((n, m))
    bits = np.empty((n, m), dtype=np.uint8)
    for k in range(n):
        for i in range(m):
            s = b[i]
            for j in range(p):
                s += W[i, j] * H[k, j]
            if s >= 0.0:
                out[k, i] = s
                bits[k, i] = 1
            else:
                out[k, i] = 0.0
                bits[k, i] = 0
    return out, bits


def _relu_layer_numpy(H, W, b):
    pre = H @ W.T + b
    bits = (pre >= 0.0).astype(np.uint8)
    return np.where(bits == 1, pre, 0.0), bits


simplex_numpy = _simplex_numpy
relu_layer_numpy = _relu_layer_numpy

if HAVE_NUMBA:
    _pivot_loops = numba.njit(cache=True, nogil=True)(_pivot_loops)
    simplex_numba = numba.njit(cache=True, nogil=True)(_simplex_loops)
    relu_layer_numba = numba.njit(cache=True, nogil=True)(_relu_layer_loops)
else:  # pragma: no cover
    simplex_numba = None
    relu_layer_numba = None

USING_JIT = HAVE_NUMBA and not jit_disabled()

if USING_JIT:
    simplex = simplex_numba
    relu_layer = relu_layer_numba
else:
    simplex = simplex_numpy
    relu_layer = relu_layer_numpy


def backend() -> str:
    return "numba" if USING_JIT else "numpy"

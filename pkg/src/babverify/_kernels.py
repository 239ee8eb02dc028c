"""Hot numeric kernels, JIT-compiled with numba when available.

Each kernel has a pure-numpy twin (the ``*_np`` functions). The numba path is
the default; set ``BABVERIFY_NO_NUMBA=1`` to force the numpy fallback, e.g.
for debugging or on platforms where numba is unavailable.
``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("BABVERIFY_NO_NUMBA", "").strip()
NUMBA_REQUESTED = _FLAG in ("", "0")

try:
    if not NUMBA_REQUESTED:
        raise ImportError("numba disabled via BABVERIFY_NO_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    njit = None
    NUMBA_ENABLED = False


# -- pure-numpy implementations ---------------------------------------------

def interval_affine_np(W, b, lo, hi):
    """Interval bounds of W @ x + b for x in the box [lo, hi]."""
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    out_lo = Wp @ lo + Wn @ hi + b
    out_hi = Wp @ hi + Wn @ lo + b
    return out_lo, out_hi


def mixed_matmul_np(W, A_for_pos, A_for_neg):
    """W+ @ A_for_pos + W- @ A_for_neg (sound one-sided composition)."""
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    return Wp @ A_for_pos + Wn @ A_for_neg


def mixed_matvec_np(W, v_for_pos, v_for_neg):
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    return Wp @ v_for_pos + Wn @ v_for_neg


def concretize_np(A, c, lo, hi, lower):
    """Min (lower=True) or max of each row of A @ x + c over the box."""
    Ap = np.maximum(A, 0.0)
    An = np.minimum(A, 0.0)
    if lower:
        return Ap @ lo + An @ hi + c
    return Ap @ hi + An @ lo + c


def bland_pivot_np(T, basis, num_cols, tol, max_iter):
    """Simplex iterations on tableau T with Bland's anti-cycling rule.

    T has the objective in its last row and the rhs in its last column;
    only columns [0, num_cols) are eligible to enter. Pivots in place.
    Returns 0 on optimality, 1 if no pivot row exists for the entering
    column, 2 if the iteration cap is hit.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    for _ in range(max_iter):
        enter = -1
        for j in range(num_cols):
            if T[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            return 0
        leave = -1
        best = np.inf
        for i in range(m):
            a = T[i, enter]
            if a > tol:
                r = T[i, rhs] / a
                if r < best - 1e-12:
                    best = r
                    leave = i
                elif r <= best + 1e-12 and leave >= 0 and basis[i] < basis[leave]:
                    leave = i
        if leave < 0:
            return 1
        piv = T[leave, enter]
        T[leave, :] /= piv
        for i in range(m + 1):
            if i != leave:
                f = T[i, enter]
                if f != 0.0:
                    T[i, :] -= f * T[leave, :]
        basis[leave] = enter
    return 2


# -- loop forms (identical semantics, written for numba) ---------------------

def _interval_affine_loop(W, b, lo, hi):
    m, n = W.shape
    out_lo = np.empty(m)
    out_hi = np.empty(m)
    for i in range(m):
        acc_lo = b[i]
        acc_hi = b[i]
        for j in range(n):
            w = W[i, j]
            if w >= 0.0:
                acc_lo += w * lo[j]
                acc_hi += w * hi[j]
            else:
                acc_lo += w * hi[j]
                acc_hi += w * lo[j]
        out_lo[i] = acc_lo
        out_hi[i] = acc_hi
    return out_lo, out_hi


def _mixed_matmul_loop(W, A_for_pos, A_for_neg):
    m, n = W.shape
    d = A_for_pos.shape[1]
    out = np.zeros((m, d))
    for i in range(m):
        for j in range(n):
            w = W[i, j]
            if w >= 0.0:
                for k in range(d):
                    out[i, k] += w * A_for_pos[j, k]
            else:
                for k in range(d):
                    out[i, k] += w * A_for_neg[j, k]
    return out


def _mixed_matvec_loop(W, v_for_pos, v_for_neg):
    m, n = W.shape
    out = np.zeros(m)
    for i in range(m):
        for j in range(n):
            w = W[i, j]
            if w >= 0.0:
                out[i] += w * v_for_pos[j]
            else:
                out[i] += w * v_for_neg[j]
    return out


def _concretize_loop(A, c, lo, hi, lower):
    m, n = A.shape
    out = np.empty(m)
    for i in range(m):
        acc = c[i]
        for j in range(n):
            a = A[i, j]
            if (a >= 0.0) == lower:
                acc += a * lo[j]
            else:
                acc += a * hi[j]
        out[i] = acc
    return out


if NUMBA_ENABLED:
    interval_affine = njit(cache=True)(_interval_affine_loop)
    mixed_matmul = njit(cache=True)(_mixed_matmul_loop)
    mixed_matvec = njit(cache=True)(_mixed_matvec_loop)
    concretize = njit(cache=True)(_concretize_loop)
    bland_pivot = njit(cache=True)(bland_pivot_np)
else:
    interval_affine = interval_affine_np
    mixed_matmul = mixed_matmul_np
    mixed_matvec = mixed_matvec_np
    concretize = concretize_np
    bland_pivot = bland_pivot_np

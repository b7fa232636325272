# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled acquisition scoring kernel.

Same contract as `roial._scores.score_candidates`, written as tight loops so
the per-iteration candidate sweep (M candidates x L posterior samples x r
categories) stays cheap. No large temporaries are allocated; each candidate
is scored with a single pass over the samples.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef int MAX_R = 64
# keep in sync with roial._scores.GAIN_FLOOR
cdef double GAIN_FLOOR = 1e-10


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _plogp(double p) nogil:
    if p > 0.0:
        return p * log(p)
    return 0.0


def score_candidates(f_cand, f_prev, thresholds, double c_p, double c_o):
    """Information gain per candidate; see the numpy twin for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] fc = np.ascontiguousarray(f_cand, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] b = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef int L = fc.shape[0]
    cdef int m = fc.shape[1]
    cdef int r = b.shape[0] + 1
    if r > MAX_R:
        raise ValueError(f"at most {MAX_R} ordinal categories supported")

    cdef bint has_prev = f_prev is not None
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] fp
    if has_prev:
        fp = np.ascontiguousarray(f_prev, dtype=np.float64)
        if fp.shape[0] != L:
            raise ValueError("f_prev length must match the sample count")
    else:
        fp = np.empty(0, dtype=np.float64)

    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] gains = np.empty(m, dtype=np.float64)

    cdef double[64] ord_p
    cdef double[128] table
    cdef int j, l, y, k
    cdef double f, prev_g, gy, cond, h, pw, mean_h, gain

    with nogil:
        for j in range(m):
            for k in range(2 * r):
                table[k] = 0.0
            cond = 0.0
            for l in range(L):
                f = fc[l, j]
                prev_g = 0.0
                h = 0.0
                for y in range(r):
                    if y < r - 1:
                        gy = _sigmoid((b[y] - f) / c_o)
                    else:
                        gy = 1.0
                    ord_p[y] = gy - prev_g
                    prev_g = gy
                    h -= _plogp(ord_p[y])
                if has_prev:
                    pw = _sigmoid((fc[l, j] - fp[l]) / c_p)
                    h -= _plogp(pw) + _plogp(1.0 - pw)
                    for y in range(r):
                        table[y] += pw * ord_p[y]
                        table[r + y] += (1.0 - pw) * ord_p[y]
                else:
                    for y in range(r):
                        table[y] += ord_p[y]
                cond += h
            mean_h = 0.0
            for k in range(2 * r if has_prev else r):
                mean_h -= _plogp(table[k] / L)
            gain = mean_h - cond / L
            if gain < GAIN_FLOOR:
                gain = 0.0
            gains[j] = gain
    return gains

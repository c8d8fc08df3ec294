# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled O(n^2) pair kernels.  See ``_kernels_py`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt, fabs

cnp.import_array()


cdef inline double _pw(double d2, double e) nogil:
    # d2^e; N + 2s = 2 and 3 are the common cases
    if e == -1.0:
        return 1.0 / d2
    if e == -1.5:
        return 1.0 / (d2 * sqrt(d2))
    return pow(d2, e)


def kernel_matrix(points, double weight, double c, double expo):
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], d = p.shape[1], i, j, k
    K_arr = np.empty((n, n))
    cdef double[:, ::1] K = K_arr
    cdef double d2, diff, val, e = -0.5 * expo, cw = c * weight
    with nogil:
        for i in range(n):
            K[i, i] = 0.0
            for j in range(i + 1, n):
                d2 = 0.0
                for k in range(d):
                    diff = p[i, k] - p[j, k]
                    d2 = d2 + diff * diff
                val = cw * _pw(d2, e)
                K[i, j] = val
                K[j, i] = val
    return K_arr


cdef inline double _kernel(const double[:, ::1] p, Py_ssize_t i, Py_ssize_t j, Py_ssize_t d,
                           double c, double e, int mode, double lam, double beta) nogil:
    cdef double d2 = 0.0, diff, xa, xb, sh, dq2
    cdef Py_ssize_t k
    for k in range(d):
        diff = p[i, k] - p[j, k]
        d2 = d2 + diff * diff
    if mode == 0:
        return c * _pw(d2, e)
    xa = p[i, 0]
    xb = p[j, 0]
    if mode == 2:
        sh = beta - (xa - lam)
        if beta - (xb - lam) < sh:
            sh = beta - (xb - lam)
        if sh < 0.0:
            sh = 0.0
        xa = xa + sh
        xb = xb + sh
    if not (xa > lam and xb > lam):
        return 0.0
    diff = p[i, 0] - p[j, 0]
    dq2 = d2 - diff * diff + (xa - (2.0 * lam - xb)) * (xa - (2.0 * lam - xb))
    return c * (_pw(d2, e) - _pw(dq2, e))


def pair_form(u, v, points, double weight, double c, double expo,
              int mode=0, double lam=0.0, double beta=0.0):
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], d = p.shape[1], i, j
    cdef double total = 0.0, row, e = -0.5 * expo
    # every mode's kernel is symmetric in (i, j): sum the upper triangle once
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(i + 1, n):
                row = row + (uu[i] - uu[j]) * (vv[i] - vv[j]) * _kernel(p, i, j, d, c, e, mode, lam, beta)
            total = total + row
    return total * weight * weight


def holder_max(values, xs, ts, double alpha, double tpow):
    cdef const double[::1] u = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(ts, dtype=np.float64)
    cdef Py_ssize_t m = u.shape[0], d = x.shape[1], a, b, k
    cdef double best = 0.0, dx, diff, den, q
    with nogil:
        for a in range(m):
            for b in range(a + 1, m):
                dx = 0.0
                for k in range(d):
                    diff = x[a, k] - x[b, k]
                    dx = dx + diff * diff
                den = pow(sqrt(dx) + pow(fabs(t[a] - t[b]), tpow), alpha)
                if den > 0.0:
                    q = fabs(u[a] - u[b]) / den
                    if q > best:
                        best = q
    return best

# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernel: accumulate zonal Gegenbauer series.

zonal_sum(coef, x, t, nu): out[i] = sum_k coef[k] * x[i]**k * C_k^nu(t[i]),
with C_k^nu by the three-term recurrence. The arithmetic order per element
matches biflow._core_py exactly.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def zonal_sum(double[::1] coef, double[::1] x, double[::1] t, double nu):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t kmax = coef.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double acc, pw, ck, ckm1, ckm2, xi, ti, term
    if t.shape[0] != m:
        raise ValueError("x and t must have equal length")
    for i in range(m):
        xi = x[i]
        ti = t[i]
        ckm2 = 0.0
        ckm1 = 0.0
        acc = 0.0
        pw = 1.0
        for k in range(kmax + 1):
            if k == 0:
                ck = 1.0
            elif k == 1:
                ck = 2.0 * nu * ti
            else:
                ck = (2.0 * (k + nu - 1.0) * ti * ckm1 - (k + 2.0 * nu - 2.0) * ckm2) / k
            term = coef[k] * pw
            term = term * ck
            acc = acc + term
            ckm2 = ckm1
            ckm1 = ck
            pw = pw * xi
        out[i] = acc
    return out_arr

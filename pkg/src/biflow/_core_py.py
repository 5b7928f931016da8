"""Pure-numpy fallback for the compiled core.

Same arithmetic order per element as biflow._core.zonal_sum: for each k the
element update is term = coef[k]*pw; term = term*C_k; acc = acc + term;
pw = pw*x, with the Gegenbauer three-term recurrence for C_k.
"""
import numpy as np


def zonal_sum(coef, x, t, nu):
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    if t.shape != x.shape:
        raise ValueError("x and t must have equal length")
    kmax = coef.shape[0] - 1
    acc = np.zeros_like(x)
    pw = np.ones_like(x)
    ckm2 = np.zeros_like(x)
    ckm1 = np.zeros_like(x)
    for k in range(kmax + 1):
        if k == 0:
            ck = np.ones_like(x)
        elif k == 1:
            ck = 2.0 * nu * t
        else:
            ck = (2.0 * (k + nu - 1.0) * t * ckm1 - (k + 2.0 * nu - 2.0) * ckm2) / k
        term = coef[k] * pw
        term = term * ck
        acc = acc + term
        ckm2 = ckm1
        ckm1 = ck
        pw = pw * x
    return acc

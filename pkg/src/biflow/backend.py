"""Backend selection for the hot series kernel.

The compiled Cython core is preferred when importable; BIFLOW_BACKEND
(auto|compiled|python) overrides. Both backends implement zonal_sum with
identical per-element arithmetic order; they agree to ~1e-14 relative
(exact bit-identity is only guaranteed within one backend, since the C
compiler may contract multiply-adds).
"""
import os

import numpy as np


def _select():
    mode = os.environ.get("BIFLOW_BACKEND", "auto")
    if mode not in ("auto", "compiled", "python"):
        raise ValueError(f"BIFLOW_BACKEND must be auto|compiled|python, got {mode!r}")
    if mode in ("auto", "compiled"):
        try:
            from . import _core
            return _core, "compiled"
        except ImportError:
            if mode == "compiled":
                raise
    from . import _core_py
    return _core_py, "python"


_impl, BACKEND_NAME = _select()


def zonal_sum(coef, x, t, nu):
    """sum_k coef[k] * x**k * C_k^nu(t), elementwise over matching x, t arrays."""
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    if x.ndim != 1 or t.ndim != 1:
        raise ValueError("x and t must be 1-d")
    if coef.ndim != 1 or coef.size == 0:
        raise ValueError("coef must be a nonempty 1-d array")
    return np.asarray(_impl.zonal_sum(coef, x, t, float(nu)))

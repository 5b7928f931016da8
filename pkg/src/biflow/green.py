"""Green functions on the unit ball.

* second order: -Delta with Dirichlet data, by the image charge;
* fourth order: Delta^2 with u = Delta u = 0 on the boundary, normalized so
  G(x,y) = |x-y|^{4-n} - H(x,y) with Delta^2 G = kappa_n * dirac.

H is evaluated through its zonal ultraspherical series (exact coefficients,
truncated adaptively); an independent quadrature route composes two
second-order solves and never touches the series. No memo table is kept for
(x, y) pairs: evaluations are cheap and this keeps every entry point
re-entrant. Only immutable coefficient tables are cached.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from . import constants as cn
from .backend import zonal_sum
from .numerics import check_dim, reduced_polar_rule, fit_loglog

_DEPTH_TOL = 1e-18
_DEPTH_CAP = 8000


@lru_cache(maxsize=64)
def _series_coeffs(n, kmax):
    k = np.arange(kmax + 1, dtype=float)
    c1 = 1.0 / (n - 4.0 + 2.0 * k) + 1.0 / (n + 2.0 * k)
    c2 = 1.0 / (n + 2.0 * k)
    return c1, c2


def _depth(rs, n, floor=80):
    """Truncation index: (rs)^K K^{n-3} below _DEPTH_TOL."""
    if rs <= 1e-8:
        return 8
    if rs >= 0.9985:
        raise ValueError("series route needs |x||y| < 0.9985; use the "
                         "quadrature route near the boundary")
    K = float(floor)
    for _ in range(5):
        K = max(floor, (math.log(_DEPTH_TOL) - (n - 3) * math.log(K)) / math.log(rs))
    return min(int(math.ceil(K)), _DEPTH_CAP)


def _polar_pair(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    r = float(np.linalg.norm(x))
    s = np.linalg.norm(y, axis=-1)
    rs = r * s
    dot = y @ x
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(rs > 0, dot / np.where(rs > 0, rs, 1.0), 0.0)
    return r, s, np.clip(t, -1.0, 1.0)


def regular_part_H(x, y, n=None):
    """H(x,y); y may be a single point or an (m, n) batch."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = check_dim(n if n is not None else x.shape[-1])
    single = y.ndim == 1
    y2 = np.atleast_2d(y)
    r, s, t = _polar_pair(x, y2)
    rs = r * s
    K = _depth(float(np.max(rs)) if rs.size else 0.0, n)
    c1, c2 = _series_coeffs(n, K)
    nu = (n - 2) / 2.0
    z1 = zonal_sum(c1, rs, t, nu)
    z2 = zonal_sum(c2, rs, t, nu)
    out = (n - 4.0) * (z1 - (r * r + s * s) * z2)
    return float(out[0]) if single else out


def grad_H(x, y, n=None):
    """Gradient of H in the first slot, from differentiated series."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = check_dim(n if n is not None else x.shape[-1])
    nu = (n - 2) / 2.0
    r = float(np.linalg.norm(x))
    s = float(np.linalg.norm(y))
    K = _depth(r * s, n)
    c1, c2 = _series_coeffs(n, K)
    if r < 1e-8:
        # only the k=0,1 terms contribute to the gradient at the center
        return (n - 4.0) * 2.0 * nu * (c1[1] - c2[1] * s * s) * y
    if s < 1e-8:
        return -2.0 * (n - 4.0) * c2[0] * x
    t = float(np.clip((x @ y) / (r * s), -1.0, 1.0))
    rs = np.array([r * s])
    tt = np.array([t])
    ks = np.arange(K + 1, dtype=float)
    z2 = float(zonal_sum(c2, rs, tt, nu)[0])
    z1k = float(zonal_sum(c1 * ks, rs, tt, nu)[0])
    z2k = float(zonal_sum(c2 * ks, rs, tt, nu)[0])
    h_r = (n - 4.0) * ((z1k - (r * r + s * s) * z2k) / r - 2.0 * r * z2)
    a_k = c1 - c2 * (r * r + s * s)
    # d/dt via C_k' = 2 nu C_{k-1}^{nu+1}
    ht = (n - 4.0) * 2.0 * nu * r * s * float(zonal_sum(a_k[1:], rs, tt, nu + 1.0)[0])
    xhat = x / r
    yhat = y / s
    return h_r * xhat + ht * (yhat - t * xhat) / r


def grad_H_fd(x, y, n=None, h=1e-6):
    x = np.asarray(x, float)
    n = check_dim(n if n is not None else x.shape[-1])
    g = np.zeros(n)
    for k in range(n):
        e = np.zeros(n); e[k] = h
        g[k] = (regular_part_H(x + e, y, n) - regular_part_H(x - e, y, n)) / (2 * h)
    return g


def robin(a, n=None):
    """Diagonal value H(a, a)."""
    a = np.asarray(a, float)
    n = check_dim(n if n is not None else a.shape[-1])
    return regular_part_H(a, a, n)


def _h_radial_derivative_diag(r, n):
    """One-slot dH/dr at (x, y) both of radius r on the same ray."""
    nu = (n - 2) / 2.0
    if r < 1e-9:
        return 0.0
    K = _depth(r * r, n)
    c1, c2 = _series_coeffs(n, K)
    ks = np.arange(K + 1, dtype=float)
    rs = np.array([r * r])
    tt = np.array([1.0])
    z2 = float(zonal_sum(c2, rs, tt, nu)[0])
    z1k = float(zonal_sum(c1 * ks, rs, tt, nu)[0])
    z2k = float(zonal_sum(c2 * ks, rs, tt, nu)[0])
    return (n - 4.0) * ((z1k - 2.0 * r * r * z2k) / r - 2.0 * r * z2)


def grad_robin(a, n=None):
    """Gradient of the diagonal a -> H(a, a)."""
    a = np.asarray(a, float)
    n = check_dim(n if n is not None else a.shape[-1])
    r = float(np.linalg.norm(a))
    if r < 1e-9:
        return np.zeros(n)
    return 2.0 * _h_radial_derivative_diag(r, n) * (a / r)


def dh_dnu_diag(a, n=None):
    """One-slot radial derivative of H on the diagonal (toward the boundary)."""
    a = np.asarray(a, float)
    n = check_dim(n if n is not None else a.shape[-1])
    return _h_radial_derivative_diag(float(np.linalg.norm(a)), n)


@dataclass(frozen=True)
class RateFit:
    exponent: float
    r2: float
    distances: tuple
    values: tuple


def dh_dnu_rate_check(n, distances=(0.2, 0.14, 0.1, 0.07, 0.05)):
    """Blow-up rate of dH/dnu on the diagonal near the boundary.

    Fits log|dH/dnu| against log(distance); the fitted exponent should sit
    near -(n-3).
    """
    check_dim(n)
    vals = []
    for d in distances:
        a = np.zeros(n); a[0] = 1.0 - d
        vals.append(dh_dnu_diag(a, n))
    slope, _, r2 = fit_loglog(distances, vals)
    return RateFit(exponent=slope, r2=r2, distances=tuple(distances),
                   values=tuple(vals))


# ---------------------------------------------------------------------------
# second order
# ---------------------------------------------------------------------------

def green_laplacian_ball(x, y, n=None):
    """Dirichlet Green function of -Delta on the unit ball (image charge).

    y may be an (m, n) batch.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = check_dim(n if n is not None else x.shape[-1])
    single = y.ndim == 1
    y2 = np.atleast_2d(y)
    d2 = np.sum((y2 - x[None, :]) ** 2, axis=1)
    if np.any(d2 <= 0):
        raise ValueError("coincident points")
    im2 = (float(x @ x) * np.sum(y2 * y2, axis=1) - 2.0 * (y2 @ x) + 1.0)
    out = cn.k_laplace(n) * (d2 ** ((2.0 - n) / 2.0) - im2 ** ((2.0 - n) / 2.0))
    return float(out[0]) if single else out


def _image_part(x, z):
    """Harmonic image term of the second-order kernel, |x||z| form."""
    x = np.asarray(x, float)
    z = np.atleast_2d(np.asarray(z, float))
    im2 = float(x @ x) * np.sum(z * z, axis=1) - 2.0 * (z @ x) + 1.0
    return im2 ** ((2.0 - x.shape[-1]) / 2.0)


def _singular_part(x, z, n):
    x = np.asarray(x, float)
    z = np.atleast_2d(np.asarray(z, float))
    d2 = np.sum((z - x[None, :]) ** 2, axis=1)
    return d2 ** ((2.0 - n) / 2.0)


# ---------------------------------------------------------------------------
# fourth order
# ---------------------------------------------------------------------------

def regular_part_quadrature(x, y, n=None, n_radial=90, n_angular=48,
                            peak_rate=4.0, pou_power=8):
    """H(x,y) by composing two second-order solves; series-free.

    Writing the second-order kernel as k_n (S - h) with S the free-space
    singular part and h the harmonic image part, the Riesz composition of
    S with itself over all of R^n reproduces |x-y|^{4-n} exactly, so

      H(x,y) = kappa_n k_n^2 [ int_{|z|>1} S_x S_y
                               + int_ball (S_x h_y + h_x S_y - h_x h_y) ].

    Valid uniformly in x, y including the diagonal.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = check_dim(n if n is not None else x.shape[-1])
    same = bool(np.all(x == y))
    peaks = [(x, peak_rate)] if same else [(x, peak_rate), (y, peak_rate)]

    # pou_power well above the default: the companion panel sees the other
    # kernel's |z-y|^{2-n} point, and the partition factor must flatten it
    ext = reduced_polar_rule(n, peaks, region="exterior", n_radial=n_radial,
                             n_angular=n_angular, pou_power=pou_power)
    inn = reduced_polar_rule(n, peaks, region="ball", n_radial=n_radial,
                             n_angular=n_angular, pou_power=pou_power)

    sx_e = _singular_part(x, ext.points, n)
    sy_e = sx_e if same else _singular_part(y, ext.points, n)
    outer = float(ext.weights @ (sx_e * sy_e))

    sx = _singular_part(x, inn.points, n)
    hx = _image_part(x, inn.points)
    sy = sx if same else _singular_part(y, inn.points, n)
    hy = hx if same else _image_part(y, inn.points)
    inner = float(inn.weights @ (sx * hy + hx * sy - hx * hy))

    return cn.kappa_n(n) * cn.k_laplace(n) ** 2 * (outer + inner)


def robin_quadrature(a, n=None, **kw):
    a = np.asarray(a, float)
    n = check_dim(n if n is not None else a.shape[-1])
    return regular_part_quadrature(a, a, n, **kw)


def green_navier(x, y, n=None, method="series", **kw):
    """G(x,y) = |x-y|^{4-n} - H(x,y) on the unit ball."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = check_dim(n if n is not None else x.shape[-1])
    d = float(np.linalg.norm(x - y))
    if d <= 0:
        raise ValueError("coincident points: the kernel is singular")
    if method == "series":
        h = regular_part_H(x, y, n)
    elif method == "quadrature":
        h = regular_part_quadrature(x, y, n, **kw)
    else:
        raise ValueError(f"unknown method {method!r}")
    return d ** (4.0 - n) - h


# ---------------------------------------------------------------------------
# center oracle (closed form)
# ---------------------------------------------------------------------------

def _center_profile(r, n):
    """kappa_n * (two-stage radial solve) at radius r for a unit source at 0.

    Both stages of the composition reduce to power integrals, so the value is
    exact: r^{4-n} minus this quantity equals (2n-4)/n - ((n-4)/n) r^2.
    """
    if not (0.0 < r < 1.0):
        raise ValueError("need 0 < r < 1")
    # inner piece: s in [0, r]; outer piece: s in [r, 1]
    inner = (r ** (2.0 - n) - 1.0) * (r * r / 2.0 - r ** n / n)
    outer = ((r ** (4.0 - n) - 1.0) / (n - 4.0) - (1.0 - r * r) + (1.0 - r ** n) / n)
    w = (inner + outer) / (n - 2.0) * cn.k_laplace(n)
    return cn.kappa_n(n) * w


def robin_center_oracle(n, r=0.4):
    """H(0,0) from the closed-form composed radial solve plus one
    Richardson step (exact: the remainder is purely quadratic in r, so r
    only needs to be small enough to avoid cancellation in r^{4-n})."""
    check_dim(n)
    h = lambda rr: rr ** (4.0 - n) - _center_profile(rr, n)
    return (4.0 * h(r / 2.0) - h(r)) / 3.0


def h_center_values(n, r):
    """H(0, y) at |y| = r via the same closed-form route (no Richardson)."""
    check_dim(n)
    return r ** (4.0 - n) - _center_profile(r, n)

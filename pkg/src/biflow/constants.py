"""Dimension-dependent constants of the fourth-order critical problem.

All closed forms below were cross-checked against independent radial
quadrature before being frozen; ``bubble_residual_max`` re-derives the
normalization symbolically at runtime.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import beta as beta_fn, gammaln

from .numerics import check_dim, omega, integrate_radial_rn

SUPPORTED_DIMS = (5, 6, 7, 8, 9, 10)


def critical_exponent(n):
    check_dim(n)
    return (n + 4) / (n - 4)


def c_n(n):
    """Bubble normalization: Delta^2 of the standard profile equals its
    critical power exactly."""
    check_dim(n)
    return ((n - 4) * (n - 2) * n * (n + 2)) ** ((n - 4) / 8.0)


def kappa_n(n):
    """|x|^{4-n}/kappa_n is the fundamental solution of Delta^2 in R^n."""
    check_dim(n)
    return 2.0 * (n - 2) * (n - 4) * omega(n - 1)


def k_laplace(n):
    """|x|^{2-n}*k_laplace is the fundamental solution of -Delta."""
    check_dim(n)
    return 1.0 / ((n - 2) * omega(n - 1))


def riesz_constant(n):
    """B(n) in int |x-z|^{-(n-2)}|z-y|^{-(n-2)} dz = B(n)|x-y|^{-(n-4)}."""
    check_dim(n)
    return math.pi ** (n / 2.0) * math.exp(gammaln((n - 4) / 2.0)
                                           - 2.0 * gammaln((n - 2) / 2.0))


def s_n(n):
    """Total energy of one free bubble: int delta^{2n/(n-4)} over R^n."""
    check_dim(n)
    return c_n(n) ** (2.0 * n / (n - 4)) * omega(n - 1) * beta_fn(n / 2.0, n / 2.0) / 2.0


def c2(n):
    """Pair-interaction constant: int delta_1^{(n+4)/(n-4)} delta_2 ~ c2*eps_12."""
    check_dim(n)
    return c_n(n) ** (2.0 * n / (n - 4)) * omega(n - 1) * beta_fn(n / 2.0, 2.0) / 2.0


def c3(n):
    """Second-moment constant multiplying Delta K(a)/lambda^2 in the energy."""
    check_dim(n)
    return (c_n(n) ** (2.0 * n / (n - 4)) / (2.0 * n)
            * omega(n - 1) * beta_fn((n + 2) / 2.0, (n - 2) / 2.0) / 2.0)


def c4_closed_form(n):
    """First-moment constant of the gradient pairing (closed-form candidate).

    Independent oracle for ``c4_estimate``; derived from the leading moment
    int delta^{2n/(n-4)} (x-a)_k * lambda * d/da_k log delta dx reorganized
    with the radial beta integral.
    """
    check_dim(n)
    return ((n - 4) / n * c_n(n) ** (2.0 * n / (n - 4))
            * omega(n - 1) * 0.5 * beta_fn((n + 2) / 2.0, n / 2.0))


@dataclass(frozen=True)
class ConstantSet:
    n: int
    p: float
    c_n: float
    s_n: float
    c2: float
    c3: float
    kappa_n: float
    k_laplace: float
    riesz: float
    c4_closed: float
    extras: dict = field(default_factory=dict)


def constant_set(n) -> ConstantSet:
    check_dim(n)
    return ConstantSet(n=n, p=critical_exponent(n), c_n=c_n(n), s_n=s_n(n),
                       c2=c2(n), c3=c3(n), kappa_n=kappa_n(n),
                       k_laplace=k_laplace(n), riesz=riesz_constant(n),
                       c4_closed=c4_closed_form(n))


# ---------------------------------------------------------------------------
# runtime re-derivations
# ---------------------------------------------------------------------------

def s_n_quadrature(n, rel_tol=1e-11):
    cn = c_n(n)
    m = (n - 4) / 2.0

    def g(r):
        return (cn / (1.0 + r * r) ** m) ** (2.0 * n / (n - 4))

    return integrate_radial_rn(g, n, rel_tol=rel_tol)


def c2_quadrature(n, rel_tol=1e-11):
    # far-separation limit of int delta_i^p delta_j: c2 = c_n * int delta^p
    cn = c_n(n)
    m = (n - 4) / 2.0
    p = (n + 4) / (n - 4)

    def g(r):
        return (cn / (1.0 + r * r) ** m) ** p * cn

    return integrate_radial_rn(g, n, rel_tol=rel_tol)


def bubble_residual_max(n, n_points=100, seed=0):
    """Max relative residual of Delta^2 delta - delta^{(n+4)/(n-4)}.

    Delta^2 is formed by exact symbolic differentiation of the radial profile
    and the result is sampled at quasi-random (r, lambda) points.
    """
    import sympy as sp

    check_dim(n)
    r, lam = sp.symbols("r lam", positive=True)
    m = sp.Rational(n - 4, 2)
    cn = ((n - 4) * (n - 2) * n * (n + 2)) ** sp.Rational(n - 4, 8)
    prof = cn * (lam / (1 + lam ** 2 * r ** 2)) ** m

    def radial_lap(f):
        return sp.diff(f, r, 2) + (n - 1) * sp.diff(f, r) / r

    bilap = sp.simplify(radial_lap(radial_lap(prof)))
    power = prof ** sp.Rational(n + 4, n - 4)
    fb = sp.lambdify((r, lam), bilap, "numpy")
    fp = sp.lambdify((r, lam), power, "numpy")

    rng = np.random.default_rng(seed)
    rs = rng.uniform(0.05, 3.0, n_points)
    ls = np.exp(rng.uniform(0.0, math.log(50.0), n_points))
    num = np.abs(fb(rs, ls) - fp(rs, ls))
    den = np.abs(fp(rs, ls))
    return float(np.max(num / den))


def c4_estimate(n, lam_ladder=(50.0, 100.0, 200.0), fd_step=2e-4, spec=None):
    """Measure c4 from the gradient pairing on a catalogued field.

    Single bubble at a non-critical point of a one-bump field; for each
    lambda the estimate is

        -lambda * <dJ, lam^{-1} dPdelta/da . e> /
            (2 J alpha^{(n+4)/(n-4)} J^{n/(n-4)} |grad K(a)|),

    e = grad K/|grad K|, followed by Richardson extrapolation in 1/lambda.
    Returns (estimate, spread) where spread bounds the extrapolation change.
    """
    from . import energy as en
    from . import morse
    from .numerics import QuadratureSpec
    from .projection import Configuration
    from .bubbles import Bubble

    check_dim(n)
    spec = spec or QuadratureSpec(n_radial=100, n_angular=48, rel_tol=1e-4)
    K = morse.catalogued_k("single_bump", n)
    a = np.zeros(n)
    a[0] = 0.45
    gk = K.grad(a)
    e = gk / np.linalg.norm(gk)

    vals = []
    for lam in lam_ladder:
        cfg = Configuration(bubbles=[Bubble(n=n, a=a, lam=float(lam))],
                            alphas=np.array([K.k(a) ** (-(n - 4) / 8.0)]))
        rep = en.grad_pairing_fd(cfg, K, ("a", 0, e), spec, h=fd_step)
        J = rep.j_value
        alpha_hat = rep.alphas_normalized[0]
        p = (n + 4) / (n - 4)
        denom = (2.0 * J * alpha_hat ** p * J ** (n / (n - 4.0))
                 * np.linalg.norm(gk))
        vals.append(-lam * rep.pairing / denom)

    v = list(vals)
    if len(v) >= 2:
        r1 = [2.0 * v[i + 1] - v[i] for i in range(len(v) - 1)]
    else:
        r1 = v
    if len(r1) >= 2:
        r2 = [(4.0 * r1[i + 1] - r1[i]) / 3.0 for i in range(len(r1) - 1)]
    else:
        r2 = r1
    est = r2[-1]
    spread = abs(r2[-1] - r1[-1]) + (abs(r2[-1] - r2[-2]) if len(r2) >= 2 else 0.0)
    return float(est), float(spread)

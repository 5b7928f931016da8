"""Boundary projection of bubbles and energy-norm decomposition.

P delta is the solution of Delta^2 (P delta) = delta^{(n+4)/(n-4)} with
u = Delta u = 0 on the unit sphere, i.e. P delta = delta - phi where phi is
the biharmonic correction matching delta and Delta delta on the boundary.
phi is zonal about the center direction, so it has an exact representation

    phi = sum_k (A_k s^k + B_k s^{k+2}) C_k^nu(t),  nu = (n-2)/2,

with coefficients obtained by Gauss-Gegenbauer projection of the boundary
data. This "exact" mode is the production evaluator; "asymptotic" mode uses
phi ~ c_n H(a, .) / lam^{(n-4)/2} instead.

All energy pairings are reduced to plain integrals against powers of delta:
(u, P delta)_2 = int u delta^p, and likewise for parameter derivatives of
P delta; no numerical Laplacian is ever formed.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_gegenbauer
from scipy.optimize import least_squares

from . import constants as cn
from . import green
from .backend import zonal_sum
from .bubbles import Bubble, delta_eval, delta_params_grad
from .numerics import (check_dim, reduced_polar_rule, gegenbauer_matrix,
                       gegenbauer_norm_log, QuadratureSpec)

MODES = ("exact", "asymptotic")


def _series_depth(s0):
    if s0 >= 0.985:
        raise ValueError("projection series needs |a| < 0.985")
    return 60 + int(math.ceil(-40.0 / math.log(max(s0, 0.05))))


@lru_cache(maxsize=512)
def _phi_coeff_table(n, s0, lam):
    """(A, B) for phi = sum (A_k s^k + B_k s^{k+2}) C_k^nu(t)."""
    nu = (n - 2) / 2.0
    K = _series_depth(s0)
    nq = 2 * K + 60
    t, w = roots_gegenbauer(nq, nu)     # weight (1-t^2)^{nu-1/2}
    hk = np.exp(gegenbauer_norm_log(K, nu))
    rho2 = 1.0 + s0 * s0 - 2.0 * s0 * t
    q = 1.0 + lam * lam * rho2
    m = (n - 4) / 2.0
    f0 = cn.c_n(n) * np.exp(m * (math.log(lam) - np.log(q)))
    f2 = (-cn.c_n(n) * lam ** m * (n - 4) * lam ** 2
          * (n + 2.0 * lam ** 2 * rho2) * q ** (-n / 2.0))
    C = gegenbauer_matrix(K, nu, t)
    d0 = (C * (w * f0)[None, :]).sum(axis=1) / hk
    d2 = (C * (w * f2)[None, :]).sum(axis=1) / hk
    ks = np.arange(K + 1, dtype=float)
    B = d2 / (2.0 * n + 4.0 * ks)
    A = d0 - B
    return A, B


def _phi_coeffs(b: Bubble):
    s0 = float(np.linalg.norm(b.a))
    return _phi_coeff_table(b.n, round(s0, 14), b.lam)


def phi_eval(b: Bubble, x):
    """Biharmonic boundary correction phi at points inside the closed ball."""
    A, B = _phi_coeffs(b)
    x = np.asarray(x, float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    s = np.linalg.norm(X, axis=1)
    s0 = float(np.linalg.norm(b.a))
    ahat = b.a / s0 if s0 > 0 else np.eye(b.n)[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(s > 0, (X @ ahat) / np.where(s > 0, s, 1.0), 0.0)
    t = np.clip(t, -1.0, 1.0)
    nu = (b.n - 2) / 2.0
    out = zonal_sum(A, s, t, nu) + s * s * zonal_sum(B, s, t, nu)
    return float(out[0]) if single else out


@dataclass(frozen=True, eq=False)
class ProjectedBubble:
    bubble: Bubble
    mode: str = "exact"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def n(self):
        return self.bubble.n


def _phi_any(pb: ProjectedBubble, x):
    b = pb.bubble
    if pb.mode == "exact":
        return phi_eval(b, x)
    h = green.regular_part_H(b.a, np.atleast_2d(np.asarray(x, float)), b.n)
    out = cn.c_n(b.n) * b.lam ** (-b.m) * h
    return float(out[0]) if np.asarray(x).ndim == 1 else out


def pdelta(pb: ProjectedBubble, x):
    """P delta at x (single point or batch)."""
    return delta_eval(pb.bubble, x) - _phi_any(pb, x)


def pdelta_params_grad(pb: ProjectedBubble, x):
    """(lam d/d lam, lam^{-1} d/d a) of P delta at a single point.

    Asymptotic mode differentiates the boundary term in closed form; exact
    mode falls back to central differences on phi (the delta part is always
    closed form).
    """
    b = pb.bubble
    x = np.asarray(x, float)
    if x.ndim != 1:
        raise ValueError("single point expected")
    dlam, da = delta_params_grad(b, x)
    if pb.mode == "asymptotic":
        h = green.regular_part_H(b.a, x, b.n)
        gh = green.grad_H(b.a, x, b.n)
        dlam = dlam + b.m * cn.c_n(b.n) * b.lam ** (-b.m) * h
        da = da - cn.c_n(b.n) * b.lam ** (-b.m - 1.0) * gh
        return dlam, da
    step = 1e-5
    bp = b.with_params(lam=b.lam * math.exp(step))
    bm = b.with_params(lam=b.lam * math.exp(-step))
    dlam = dlam - (phi_eval(bp, x) - phi_eval(bm, x)) / (2.0 * step)
    for k in range(b.n):
        e = np.zeros(b.n); e[k] = step / b.lam
        da[k] = da[k] - (phi_eval(b.with_params(a=b.a + e), x)
                         - phi_eval(b.with_params(a=b.a - e), x)) / (2.0 * step)
    return dlam, da


# ---------------------------------------------------------------------------
# energy pairings
# ---------------------------------------------------------------------------

def _direction_factor(bj: Bubble, kind, pts):
    """D(delta_j^p) / (p delta_j^{p-1}) for the requested derivative D."""
    if kind == "value":
        return None
    dlam, da = delta_params_grad(bj, pts)
    if kind[0] == "lam":
        return dlam
    if kind[0] == "a":
        return da @ np.asarray(kind[1], float)
    raise ValueError(f"unknown pairing kind {kind!r}")


def inner_product(pbi: ProjectedBubble, pbj: ProjectedBubble,
                  spec: QuadratureSpec = None):
    """(P delta_i, P delta_j)_2 = int_ball P delta_i * delta_j^p."""
    spec = spec or QuadratureSpec()
    bi, bj = pbi.bubble, pbj.bubble
    if bi.n != bj.n:
        raise ValueError("dimension mismatch")
    n = bi.n
    p = cn.critical_exponent(n)
    if bi.key() == bj.key():
        ext = reduced_polar_rule(n, [(bi.a, bi.lam)], region="exterior",
                                 n_radial=spec.n_radial, n_angular=spec.n_angular)
        tail = ext.weights @ (delta_eval(bi, ext.points) ** (p + 1.0))
        ball = reduced_polar_rule(n, [(bi.a, bi.lam)], region="ball",
                                  n_radial=spec.n_radial, n_angular=spec.n_angular)
        corr = ball.weights @ (_phi_any(pbi, ball.points)
                               * delta_eval(bi, ball.points) ** p)
        return float(cn.s_n(n) - tail - corr)
    rule = reduced_polar_rule(n, [(bi.a, bi.lam), (bj.a, bj.lam)], region="ball",
                              n_radial=spec.n_radial, n_angular=spec.n_angular)
    vals = pdelta(pbi, rule.points) * delta_eval(bj, rule.points) ** p
    return float(rule.weights @ vals)


def pairing_with_derivative(u_eval, pbj: ProjectedBubble, kind,
                            spec: QuadratureSpec = None, extra_peaks=()):
    """(u, D P delta_j)_2 for D in {lam d/dlam, lam^{-1} d/da . e}.

    kind: ("lam",) or ("a", direction). u_eval maps point batches to values.
    The pairing is evaluated as p * int u delta_j^{p-1} D delta_j; boundary
    terms vanish because Delta P delta vanishes on the sphere for every
    parameter value.
    """
    spec = spec or QuadratureSpec()
    bj = pbj.bubble
    n = bj.n
    p = cn.critical_exponent(n)
    peaks = [(bj.a, bj.lam)] + [(np.asarray(c, float), float(l))
                                for c, l in extra_peaks]
    rule = reduced_polar_rule(n, peaks, region="ball",
                              n_radial=spec.n_radial, n_angular=spec.n_angular)
    dj = delta_eval(bj, rule.points)
    fac = _direction_factor(bj, kind, rule.points)
    vals = p * np.asarray(u_eval(rule.points), float) * dj ** (p - 1.0) * fac
    return float(rule.weights @ vals)


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Configuration:
    bubbles: list
    alphas: np.ndarray
    mode: str = "exact"

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, float)
        if len(self.bubbles) != self.alphas.size:
            raise ValueError("one weight per bubble required")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        dims = {b.n for b in self.bubbles}
        if len(dims) > 1:
            raise ValueError("bubbles live in different dimensions")

    @property
    def n(self):
        return self.bubbles[0].n

    @property
    def projected(self):
        return [ProjectedBubble(b, self.mode) for b in self.bubbles]

    def u_eval(self, x):
        vals = None
        for a, pb in zip(self.alphas, self.projected):
            v = a * pdelta(pb, x)
            vals = v if vals is None else vals + v
        return vals

    def peaks(self):
        return [(b.a, b.lam) for b in self.bubbles]

    def gram(self, spec=None):
        pbs = self.projected
        k = len(pbs)
        M = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                if j < i:
                    M[i, j] = M[j, i]
                else:
                    M[i, j] = inner_product(pbs[i], pbs[j], spec)
        return 0.5 * (M + M.T)

    def norm_sq(self, spec=None):
        M = self.gram(spec)
        return float(self.alphas @ M @ self.alphas)


# ---------------------------------------------------------------------------
# gridded functions and decomposition
# ---------------------------------------------------------------------------

@dataclass
class GriddedFunction:
    points: np.ndarray    # (m, n)
    weights: np.ndarray   # (m,) quadrature weights on the ball
    values: np.ndarray    # (m,)
    dim: int
    norm_sq: float = math.nan   # energy norm of the sampled function, if known

    def save(self, path):
        np.savez_compressed(path, points=self.points, weights=self.weights,
                            values=self.values, dim=np.array([self.dim]),
                            norm_sq=np.array([self.norm_sq]))

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(points=z["points"], weights=z["weights"],
                       values=z["values"], dim=int(z["dim"][0]),
                       norm_sq=float(z["norm_sq"][0]))


def synthesize_grid(cfg: Configuration, spec: QuadratureSpec = None, noise=0.0,
                    seed=0):
    """Sample a configuration on a ball rule fine enough for decomposition."""
    # decomposition grids trade rule depth for file size; pairings that need
    # tight tolerances use their own specs
    spec = spec or QuadratureSpec(n_radial=64, n_angular=24)
    rule = reduced_polar_rule(cfg.n, cfg.peaks(), region="ball",
                              n_radial=spec.n_radial, n_angular=spec.n_angular)
    vals = cfg.u_eval(rule.points)
    if noise > 0:
        rng = np.random.default_rng(seed)
        vals = vals * (1.0 + noise * rng.standard_normal(vals.shape))
    return GriddedFunction(points=rule.points, weights=rule.weights,
                           values=np.asarray(vals, float), dim=cfg.n,
                           norm_sq=cfg.norm_sq(spec))


@dataclass
class DecomposeResult:
    config: Configuration
    residual_norm: float        # energy norm of u - sum alpha_i P delta_i
    relative_residual: float
    converged: bool
    n_iterations: int
    v0_residuals: np.ndarray = None   # normalized tangent pairings


def _initial_guess(grid: GriddedFunction, count, n):
    vals = grid.values.copy()
    cnn = cn.c_n(n)
    bubbles = []
    for _ in range(count):
        j = int(np.argmax(np.abs(vals)))
        a = grid.points[j]
        lam = max(abs(vals[j]) / cnn, 1.0) ** (2.0 / (n - 4.0))
        bubbles.append(Bubble(n, a * min(1.0, 0.95 / max(np.linalg.norm(a), 1e-9)),
                              max(lam, 2.0)))
        d2 = np.sum((grid.points - a[None, :]) ** 2, axis=1)
        vals = np.where(d2 < (4.0 / lam) ** 2, 0.0, vals)
    return bubbles


def _v0_pairings(bs, p, mode, pts, w, vals):
    """Energy pairings of the residual against the tangent directions.

    (r, dir)_2 = int r Delta^2(dir) and Delta^2 of a parameter derivative
    of P delta is the closed-form derivative of delta^p, so every pairing
    is a plain grid sum. Weights solve the grid-measure Gram system of the
    same pairing family. Returns (pairings, direction norms, weights).
    """
    n = bs[0].n
    pbs = [ProjectedBubble(b, mode) for b in bs]
    P = np.stack([pdelta(pb, pts) for pb in pbs])
    D = np.stack([delta_eval(b, pts) ** p for b in bs])
    # raw pairing matrix, not symmetrized: weights that interpolate the data
    # must reproduce it exactly on the nodes or the pairings shift off zero
    A = (D * w[None, :]) @ P.T
    alpha = np.linalg.solve(A, D @ (w * vals))
    r = vals - alpha @ P
    wr = w * r
    g, norms = [], []
    for b, dpk in zip(bs, D):
        dlam, da = delta_params_grad(b, pts)
        base = p * dpk / delta_eval(b, pts)          # p delta^{p-1}
        g.append(float(wr @ (base * dlam)))
        norms.append(math.sqrt(max(float((w * base * dlam) @ dlam), 1e-300)))
        for k in range(n):
            g.append(float(wr @ (base * da[:, k])))
            norms.append(math.sqrt(max(float((w * base * da[:, k]) @ da[:, k]),
                                       1e-300)))
    return np.array(g), np.array(norms), alpha


def decompose(grid: GriddedFunction, count, spec: QuadratureSpec = None,
              init=None, mode="exact", opt_nodes=8000):
    """Best energy-norm approximation of a gridded function by bubbles.

    Fits the weighted node mismatch sum w rho (u - sum beta P delta)^2
    with variable projection in beta, where rho is the by-parts density
    p delta^{p-1} of the initial geometry. The rho factor emphasizes the
    peaks the way the energy norm does (the plain ball measure barely
    weighs peak mismatch for n >= 5, leaving the rates weakly determined),
    and because the weights are fixed and positive a zero-residual input
    makes the true parameters an exact global minimum of the sum on any
    node subset. A bounded trust-region pass gets the geometry close, then
    Gauss-Newton with central-difference Jacobians polishes it; the
    one-sided steps of the first pass stall once their finite-difference
    bias exceeds the true gradient, central differences stay accurate a
    few orders deeper.

    Center components are optimized only along coordinates that vary over
    the node set. A zonal rule samples a coordinate slice; transverse
    center components are invisible to such data (any value fits equally
    well) and stay at the initial estimate. Rates are confined to a few
    times the initial peak estimates and centers to a box around the
    detected maxima: outside that window thin spikes slip between nodes
    and the node sums certify nothing.

    During optimization the grid is restricted to at most opt_nodes nodes
    (the heaviest by w u^2 mass plus a uniform stride); the returned
    weights and residual are recomputed against the full grid and the
    exact Gram, and the energy-metric tangent pairings at the solution are
    reported, normalized, as v0_residuals.
    """
    n = check_dim(grid.dim)
    spec = spec or QuadratureSpec(n_radial=100, n_angular=48)
    p = cn.critical_exponent(n)
    wv = grid.weights * grid.values
    m = grid.points.shape[0]
    if m > opt_nodes:
        heavy = int(0.75 * opt_nodes)
        idx = np.argsort(-np.abs(wv) * np.abs(grid.values))[:heavy]
        stride = np.arange(0, m, max(1, m // (opt_nodes - heavy)))
        idx = np.unique(np.concatenate([idx, stride]))
    else:
        idx = slice(None)
    pts_o, w_o, v_o = grid.points[idx], grid.weights[idx], grid.values[idx]
    bubbles0 = init if init is not None else _initial_guess(grid, count, n)
    base_a = [np.asarray(b.a, float).copy() for b in bubbles0]
    act = [j for j in range(n) if float(np.abs(grid.points[:, j]).max()) > 1e-12]
    na = len(act)
    blk = na + 1
    # fit in the w rho measure, rho the by-parts density at the initial
    # geometry: rho-weighted pairings against tangent directions are energy
    # pairings, so this emphasizes the peaks the way the energy norm does
    # (the plain ball measure barely weighs them for n >= 5), while fixed
    # weights keep the zero-residual pinning and offer no node-slip reward
    rho0 = np.zeros_like(w_o)
    for b in bubbles0:
        rho0 += p * delta_eval(b, pts_o) ** (p - 1.0)
    w_fit = w_o * rho0
    sw_o = np.sqrt(w_fit)
    ridge = 1e-12

    def unpack(theta):
        bs = []
        for i in range(count):
            seg = theta[i * blk:(i + 1) * blk]
            a = base_a[i].copy()
            a[act] = seg[:na]
            bs.append(Bubble(n, a, math.exp(np.clip(seg[na], -2.0, 12.0))))
        return bs

    def residuals(theta):
        bs = unpack(theta)
        # wall short of the projection series domain; trial points stay off it
        over = max(float(np.linalg.norm(b.a)) for b in bs) - 0.95
        if over > 0:
            return sw_o * (np.abs(v_o) + over * (1.0 + np.abs(v_o)))
        P = np.stack([pdelta(ProjectedBubble(b, mode), pts_o) for b in bs])
        M2 = (P * w_fit[None, :]) @ P.T
        M2 += ridge * np.trace(M2) * np.eye(count)
        beta = np.linalg.solve(M2, P @ (w_fit * v_o))
        return sw_o * (v_o - beta @ P)

    # trust window around the peak estimates: the rule certifies rates only
    # up to a few times the sampled peaks (thinner spikes slip between
    # nodes), and centers only near the detected maxima
    lo, hi = [], []
    for b in bubbles0:
        box = 8.0 / b.lam
        for j in act:
            lo.append(max(b.a[j] - box, -0.93))
            hi.append(min(b.a[j] + box, 0.93))
        lo.append(math.log(max(b.lam / 3.0, 1.5)))
        hi.append(math.log(3.0 * b.lam))
    lo, hi = np.array(lo), np.array(hi)
    lo = np.minimum(lo, hi - 1e-9)
    x0 = np.concatenate([np.append(a[act], math.log(b.lam))
                         for a, b in zip(base_a, bubbles0)])
    x0 = np.clip(x0, lo, hi)
    # coarse geometry; terminal accuracy comes from the Gauss-Newton stage
    lam_scale = max(b.lam for b in bubbles0)
    x_scale = np.array((([1.0 / lam_scale] * na) + [1.0]) * count)
    fit1 = least_squares(residuals, x0, bounds=(lo, hi), method="trf",
                         x_scale=x_scale, xtol=1e-10, ftol=1e-10, gtol=None,
                         diff_step=1e-6, max_nfev=150 * (na + 1) * count)
    theta = fit1.x

    r0 = residuals(theta)
    f0 = float(r0 @ r0)
    f_floor = 1e-22 * float(w_fit @ (v_o * v_o))
    last_step = math.inf if f0 > f_floor else 0.0
    dim = theta.size
    gn_iters = 0
    for _ in range(8):
        if f0 <= f_floor:
            break
        J = np.empty((r0.size, dim))
        for k in range(dim):
            h = 1e-5 * max(abs(theta[k]), 1e-2)
            e = np.zeros(dim)
            e[k] = h
            J[:, k] = (residuals(theta + e) - residuals(theta - e)) / (2.0 * h)
        step = np.linalg.lstsq(J, -r0, rcond=1e-12)[0]
        cand = np.clip(theta + step, lo, hi)
        r1 = residuals(cand)
        f1 = float(r1 @ r1)
        halvings = 0
        while f1 > f0 and halvings < 4:
            step = 0.5 * step
            cand = np.clip(theta + step, lo, hi)
            r1 = residuals(cand)
            f1 = float(r1 @ r1)
            halvings += 1
        gn_iters += 1
        if f1 > f0:
            break
        theta, r0, f0 = cand, r1, f1
        last_step = float(np.max(np.abs(step)))
        if last_step < 1e-10:
            break
    gn_ok = f0 <= f_floor or last_step < 1e-6

    # the reported optimality is energy-metric; polish the sampled-coordinate
    # pairings below the report scale (they already vanish for exact data)
    vmask = []
    for i in range(count):
        base = i * (n + 1)
        vmask.append(base)
        vmask.extend(base + 1 + j for j in act)
    vmask = np.array(vmask, dtype=int)

    def v0_masked(th):
        g, norms, _ = _v0_pairings(unpack(th), p, mode, pts_o, w_o, v_o)
        return (g / norms)[vmask]

    g0 = v0_masked(theta)
    g_floor = 1e-13 * math.sqrt(max(grid.norm_sq if math.isfinite(grid.norm_sq)
                                    else 1.0, 1.0))
    for _ in range(3):
        if np.max(np.abs(g0)) < g_floor:
            break
        J = np.empty((g0.size, dim))
        for k in range(dim):
            h = 1e-6 * max(abs(theta[k]), 1e-2)
            e = np.zeros(dim)
            e[k] = h
            J[:, k] = (v0_masked(theta + e) - v0_masked(theta - e)) / (2.0 * h)
        step = np.linalg.lstsq(J, -g0, rcond=1e-10)[0]
        # a meaningful polish is a small correction with a decisive drop;
        # anything else is finite-difference noise on vanishing pairings
        if np.max(np.abs(step)) > 1e-2:
            break
        cand = np.clip(theta + step, lo, hi)
        if max(float(np.linalg.norm(b.a)) for b in unpack(cand)) > 0.95:
            break
        g1 = v0_masked(cand)
        if np.linalg.norm(g1) >= 0.5 * np.linalg.norm(g0):
            break
        theta, g0 = cand, g1
        gn_iters += 1

    bs = unpack(theta)
    # exact-Gram weights and residual at the optimized geometry
    cfg1 = Configuration(bs, np.ones(count), mode)
    M = cfg1.gram(spec)
    b = np.array([wv @ (delta_eval(bb, grid.points) ** p) for bb in bs])
    alpha = np.linalg.solve(M, b)
    cfg = Configuration(bs, alpha, mode)
    fit = float(b @ alpha)
    if math.isfinite(grid.norm_sq):
        res_sq = max(grid.norm_sq - fit, 0.0)
        rnorm = math.sqrt(res_sq)
        rel = rnorm / math.sqrt(grid.norm_sq)
    else:
        rnorm, rel = math.nan, math.nan
    v0_full, norms_full, _ = _v0_pairings(bs, p, mode, grid.points,
                                          grid.weights, grid.values)
    # certificate denominator floored at the quadrature-trust scale; below
    # that the discrete pairings are roundoff and the ratio is meaningless
    scale = grid.norm_sq if math.isfinite(grid.norm_sq) else float(wv @ grid.values)
    denom = norms_full * max(rnorm if math.isfinite(rnorm) else 0.0,
                             1e-7 * math.sqrt(max(scale, 1e-300)))
    return DecomposeResult(config=cfg, residual_norm=rnorm,
                           relative_residual=rel,
                           converged=bool(fit1.success and gn_ok),
                           n_iterations=int(fit1.nfev + gn_iters),
                           v0_residuals=v0_full / denom)

"""Quadrature and ODE machinery shared by every module.

Two quadrature families live here:

* ``reduced_polar_rule`` — the structured high-accuracy path. Every integrand
  in this package depends on position only through distances to a few anchor
  points (bubble centers, field atom centers, the origin). With
  q = dim span(anchors) the integral over the ball / R^n / the ball exterior
  reduces exactly to q+1 dimensions,

      int f dx = omega_{n-q-1} * int f(xi, rho) rho^{n-q-1} dxi drho,

  and the nodes are lifted back to R^n (x = E xi + rho u_perp) so ordinary
  code paths evaluate on them. Peaks are resolved by per-peak polar
  coordinates with a tan radial map of the peak's rate.

* ``integrate_ball`` — the generic black-box path (per-center polar with a
  seeded antithetic Sobol direction set), with an internal error estimate.

All rules are deterministic: fixed construction order, fixed summation order,
seeded direction sets.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.special import roots_gegenbauer, roots_jacobi, gammaln
from scipy.stats import qmc, norm

SUPPORTED_DIMS = (5, 6, 7, 8, 9, 10)


def check_dim(n):
    if n not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be in {SUPPORTED_DIMS}, got {n}")
    return int(n)


def omega(m: int) -> float:
    """Surface area of the unit sphere S^m in R^{m+1}."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


class QuadratureError(RuntimeError):
    """Raised when a rule cannot certify the requested tolerance.

    Carries the best estimate and the internal error estimate.
    """

    def __init__(self, msg, best=None, err_estimate=None):
        super().__init__(msg)
        self.best = best
        self.err_estimate = err_estimate


class OdeStiffnessError(RuntimeError):
    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class BallDomain:
    dim: int
    # radius fixed to 1

    def __post_init__(self):
        check_dim(self.dim)

    @property
    def radius(self):
        return 1.0

    def boundary_distance(self, a):
        a = np.asarray(a, float)
        return 1.0 - float(np.linalg.norm(a))


@dataclass(frozen=True)
class QuadratureSpec:
    n_radial: int = 120
    n_angular: int = 64
    n_sphere: int = 4096          # Sobol directions for the black-box path
    rel_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if min(self.n_radial, self.n_angular, self.n_sphere) < 1:
            raise ValueError("node counts must be >= 1")

    def coarser(self):
        return QuadratureSpec(max(self.n_radial // 2, 8),
                              max(self.n_angular // 2, 6),
                              max(self.n_sphere // 2, 32),
                              self.rel_tol, self.seed)


@dataclass(frozen=True)
class OdeSpec:
    initial_step: float = 1e-3
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 200_000
    event_tol: float = 1e-9
    # Budget: integration runs on [0, t_max] with t_max = max_steps*initial_step
    # unless the caller passes an explicit horizon.

    def __post_init__(self):
        for name in ("initial_step", "rtol", "atol", "event_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def t_budget(self):
        return self.max_steps * self.initial_step


# ---------------------------------------------------------------------------
# cached 1-d rules
# ---------------------------------------------------------------------------

@lru_cache(maxsize=256)
def _leggauss(m):
    x, w = leggauss(m)
    return x, w


@lru_cache(maxsize=256)
def _gegenbauer_rule(m, alpha):
    # weight (1 - x^2)^(alpha - 1/2) on [-1, 1]
    x, w = roots_gegenbauer(m, alpha)
    return x, w


@lru_cache(maxsize=256)
def _jacobi01(m, a, b):
    # nodes/weights for int_0^1 g(v) (1-v)^a v^b dv
    x, w = roots_jacobi(m, a, b)
    v = 0.5 * (x + 1.0)
    return v, w * 2.0 ** (-(a + b + 1.0))


def gegenbauer_matrix(kmax, nu, t):
    """C_k^nu(t) for k = 0..kmax; returns (kmax+1, len(t))."""
    t = np.atleast_1d(np.asarray(t, float))
    C = np.empty((kmax + 1, t.size))
    C[0] = 1.0
    if kmax >= 1:
        C[1] = 2.0 * nu * t
    for k in range(2, kmax + 1):
        C[k] = (2.0 * (k + nu - 1.0) * t * C[k - 1] - (k + 2.0 * nu - 2.0) * C[k - 2]) / k
    return C


def gegenbauer_norm_log(kmax, nu):
    """log h_k with h_k = int_{-1}^1 C_k^nu(t)^2 (1-t^2)^{nu-1/2} dt."""
    ks = np.arange(kmax + 1)
    return (math.log(math.pi) + (1.0 - 2.0 * nu) * math.log(2.0)
            + gammaln(ks + 2.0 * nu) - gammaln(ks + 1.0)
            - np.log(ks + nu) - 2.0 * gammaln(nu))


def fit_loglog(x, y):
    """Least-squares slope of log|y| against log|x|; returns (slope, intercept, r2)."""
    lx = np.log(np.abs(np.asarray(x, float)))
    ly = np.log(np.abs(np.asarray(y, float)))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


# ---------------------------------------------------------------------------
# reduced frames
# ---------------------------------------------------------------------------

class ReducedFrame:
    """Orthonormal basis of span(anchors) plus one fixed transverse direction.

    Reduced coordinates of x are (xi, rho) with xi = E^T x and rho the distance
    from x to the span. Any point whose anchors all lie in the span has
    |x - p|^2 = |xi - xi_p|^2 + rho^2, so integrands built from such distances
    are exact on lifted nodes.
    """

    def __init__(self, n, anchors, tol=1e-12):
        self.n = check_dim(n)
        pts = [np.zeros(n)] if not len(anchors) else [np.asarray(p, float) for p in anchors]
        A = np.array(pts, dtype=float)  # (k, n)
        if A.shape[1] != n:
            raise ValueError("anchor dimension mismatch")
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        scale = s[0] if s.size and s[0] > 0 else 1.0
        q = int(np.sum(s > tol * max(scale, 1.0)))
        self.q = q
        self.E = vt[:q].T.copy()  # (n, q), orthonormal columns
        if q >= n:
            raise ValueError("frame spans the full space; no transverse direction left")
        # deterministic transverse unit vector: largest-residual standard basis vector
        resid = np.eye(n) - self.E @ self.E.T
        norms = np.linalg.norm(resid, axis=0)
        j = int(np.argmax(norms))
        self.u_perp = resid[:, j] / norms[j]

    def reduce(self, point):
        point = np.asarray(point, float)
        xi = self.E.T @ point
        res = point - self.E @ xi
        if np.linalg.norm(res) > 1e-9 * max(1.0, np.linalg.norm(point)):
            raise ValueError("point is not in the frame span")
        return xi

    def lift(self, xi, rho):
        xi = np.atleast_2d(np.asarray(xi, float))
        rho = np.asarray(rho, float)
        return xi @ self.E.T + np.multiply.outer(rho, self.u_perp)


def _directions(q, n, n_angular, n_azimuth=None):
    """Direction nodes on the half sphere S^q_+ with the rho-power weight.

    Returns (dirs, w) with dirs (m, q+1); w integrates
    g -> int_{S^q_+} g(dir) dir_rho^{n-q-1} dsigma(dir).
    """
    if q == 0:
        return np.array([[1.0]]), np.array([1.0])
    if q == 1:
        t, wt = _gegenbauer_rule(n_angular, (n - 2) / 2.0)
        dirs = np.stack([t, np.sqrt(1.0 - t * t)], axis=1)
        return dirs, wt.copy()
    if q == 2:
        nphi = n_azimuth or 2 * n_angular
        w01, ww = _jacobi01(n_angular, 0.0, float(n - 3))
        phi = 2.0 * math.pi * np.arange(nphi) / nphi
        wphi = 2.0 * math.pi / nphi
        W, PHI = np.meshgrid(w01, phi, indexing="ij")
        s = np.sqrt(1.0 - W ** 2)
        dirs = np.stack([s * np.cos(PHI), s * np.sin(PHI), W], axis=-1).reshape(-1, 3)
        wts = (ww[:, None] * wphi * np.ones((1, nphi))).reshape(-1)
        return dirs, wts
    if q == 3:
        nphi = n_azimuth or 2 * n_angular
        v, wv = _jacobi01(n_angular, 0.5, (n - 5) / 2.0)
        c, wc = _leggauss(n_angular)
        phi = 2.0 * math.pi * np.arange(nphi) / nphi
        wphi = 2.0 * math.pi / nphi
        V, Cc, PHI = np.meshgrid(v, c, phi, indexing="ij")
        su = np.sqrt(1.0 - Cc ** 2)
        ux = su * np.cos(PHI)
        uy = su * np.sin(PHI)
        sin_chi = np.sqrt(1.0 - V)
        dirs = np.stack([sin_chi * ux, sin_chi * uy, sin_chi * Cc, np.sqrt(V)],
                        axis=-1).reshape(-1, 4)
        wts = (0.5 * wv[:, None, None] * wc[None, :, None] * wphi).reshape(-1)
        return dirs, np.broadcast_to(wts, dirs.shape[:1]).copy()
    raise NotImplementedError(f"direction rule for q={q} (frame too large)")


@dataclass
class PolarRule:
    points: np.ndarray   # (m, n) lifted nodes
    weights: np.ndarray  # (m,)
    frame: ReducedFrame
    xi: np.ndarray       # (m, q) reduced in-span coordinates
    rho: np.ndarray      # (m,)

    def integrate(self, f):
        vals = np.asarray(f(self.points), float)
        return float(np.sum(self.weights * vals))


def _exit_radius(p_red, dirs):
    # |p + R dir| = 1 in the reduced (q+1)-space; valid for |p| < 1
    b = dirs @ p_red
    c = 1.0 - float(p_red @ p_red)
    disc = b * b + c
    return -b + np.sqrt(np.maximum(disc, 0.0))


def reduced_polar_rule(n, peaks, region="ball", extra_anchors=(),
                       n_radial=120, n_angular=64, n_azimuth=None,
                       pou_power=3):
    """Build a reduced-frame per-peak polar rule.

    peaks: list of (center (n,), rate lambda). region: ball | rn | exterior.
    extra_anchors: additional points that must lie in the frame span (e.g.
    field atom centers). Weights integrate f over the region; evaluate f on
    .points and dot with .weights.
    """
    check_dim(n)
    peaks = [(np.asarray(c, float), float(l)) for c, l in peaks]
    if not peaks:
        raise ValueError("need at least one peak")
    anchors = [c for c, _ in peaks] + [np.asarray(p, float) for p in extra_anchors]
    frame = ReducedFrame(n, anchors)
    q = frame.q
    dirs, wdir = _directions(q, n, n_angular, n_azimuth)
    om = omega(n - q - 1)
    u_nodes, u_wts = _leggauss(n_radial)

    p_red = [np.append(frame.reduce(c), 0.0) for c, _ in peaks]
    rates = [l for _, l in peaks]

    xi_all, rho_all, w_all = [], [], []
    half_pi = 0.5 * math.pi * (1.0 - 1e-14)
    for ip, (pk, lam) in enumerate(zip(p_red, rates)):
        if region == "ball":
            rexit = _exit_radius(pk, dirs)
            u_hi = np.arctan(lam * rexit)
            u_lo = np.zeros_like(u_hi)
        elif region == "rn":
            u_hi = np.full(dirs.shape[0], half_pi)
            u_lo = np.zeros_like(u_hi)
        elif region == "exterior":
            rexit = _exit_radius(pk, dirs)
            u_hi = np.full(dirs.shape[0], half_pi)
            u_lo = np.arctan(lam * rexit)
        else:
            raise ValueError(f"unknown region {region!r}")
        # radial nodes per direction: u in [u_lo, u_hi], r = tan(u)/lam
        U = 0.5 * (u_nodes[None, :] + 1.0) * (u_hi - u_lo)[:, None] + u_lo[:, None]
        WU = 0.5 * (u_hi - u_lo)[:, None] * u_wts[None, :]
        TU = np.tan(U)
        R = TU / lam                        # (ndir, nr)
        JAC = (1.0 + TU ** 2) / lam
        Z = pk[None, None, :] + R[:, :, None] * dirs[:, None, :]   # (ndir, nr, q+1)
        XI = Z[..., :q]
        RHO = Z[..., q]
        W = om * wdir[:, None] * WU * JAC * R ** (n - 1)
        # partition of unity over peaks, in reduced coordinates
        if len(peaks) > 1:
            psis = []
            for (pj, lj) in zip(p_red, rates):
                d2 = np.sum((Z - pj[None, None, :]) ** 2, axis=-1)
                psis.append(1.0 / (1.0 / lj ** 2 + d2) ** pou_power)
            tot = psis[0].copy()
            for ps in psis[1:]:
                tot = tot + ps
            W = W * (psis[ip] / tot)
        m_nodes = XI.shape[0] * XI.shape[1]
        xi_all.append(XI.reshape(m_nodes, q))
        rho_all.append(RHO.reshape(m_nodes))
        w_all.append(W.reshape(m_nodes))

    xi = np.concatenate(xi_all, axis=0)
    rho = np.concatenate(rho_all, axis=0)
    w = np.concatenate(w_all, axis=0)
    pts = frame.lift(xi, rho)
    return PolarRule(points=pts, weights=w, frame=frame, xi=xi, rho=rho)


# ---------------------------------------------------------------------------
# black-box ball integration
# ---------------------------------------------------------------------------

def _sobol_sphere(n, m, seed):
    """Antithetic quasi-random unit directions (2*ceil(m/2), n)."""
    half = max(m // 2, 1)
    eng = qmc.Sobol(d=n, scramble=True, seed=seed)
    u = eng.random(half)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    g = norm.ppf(u)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.concatenate([g, -g], axis=0)


def _ball_value(f, centers, n, nr, ndir, seed):
    dirs = _sobol_sphere(n, ndir, seed)
    m = dirs.shape[0]
    u_nodes, u_wts = _leggauss(nr)
    total = 0.0
    cs = [(np.asarray(c, float), float(l)) for c, l in centers]
    for ic, (c, lam) in enumerate(cs):
        b = dirs @ c
        disc = b * b + (1.0 - float(c @ c))
        rexit = -b + np.sqrt(np.maximum(disc, 0.0))
        u_hi = np.arctan(lam * rexit)
        U = 0.5 * (u_nodes[None, :] + 1.0) * u_hi[:, None]
        WU = 0.5 * u_hi[:, None] * u_wts[None, :]
        TU = np.tan(U)
        R = TU / lam
        JAC = (1.0 + TU ** 2) / lam
        X = c[None, None, :] + R[:, :, None] * dirs[:, None, :]
        vals = np.asarray(f(X.reshape(-1, n)), float).reshape(m, nr)
        W = WU * JAC * R ** (n - 1)
        if len(cs) > 1:
            psis = []
            for (cj, lj) in cs:
                d2 = np.sum((X - cj[None, None, :]) ** 2, axis=-1)
                psis.append(1.0 / (1.0 / lj ** 2 + d2) ** 3)
            tot = psis[0].copy()
            for ps in psis[1:]:
                tot = tot + ps
            W = W * (psis[ic] / tot)
        total += float(np.sum(W * vals))
    return total * omega(n - 1) / m


def integrate_ball(f, centers, spec: QuadratureSpec, domain: BallDomain = None, n=None):
    """Integrate a black-box scalar field over the unit ball.

    f maps (m, n) point arrays to (m,) values. centers: list of (point, rate)
    pairs marking concentration peaks (may be empty). Raises QuadratureError
    (carrying the best estimate) if the internal error estimate exceeds
    spec.rel_tol.
    """
    if domain is not None:
        n = domain.dim
    n = check_dim(n)
    cs = list(centers) if centers else [(np.zeros(n), 1.0)]
    for c, _ in cs:
        if np.linalg.norm(np.asarray(c, float)) >= 1.0:
            raise ValueError("centers must be interior points")
    fine = _ball_value(f, cs, n, spec.n_radial, spec.n_sphere, spec.seed)
    co = spec.coarser()
    coarse = _ball_value(f, cs, n, co.n_radial, co.n_sphere, co.seed)
    scale = max(abs(fine), abs(coarse), 1e-300)
    err = abs(fine - coarse) / scale
    if err > spec.rel_tol and abs(fine - coarse) > spec.rel_tol:
        raise QuadratureError(
            f"ball quadrature error estimate {err:.3e} exceeds rel_tol {spec.rel_tol:.1e}",
            best=fine, err_estimate=err)
    return fine


def integrate_radial_rn(g, n, rel_tol=1e-10, start_nodes=64, max_nodes=65536):
    """omega_{n-1} * int_0^inf g(r) r^{n-1} dr via the tan substitution.

    Doubles the Gauss-Legendre node count until two refinements agree to
    rel_tol; raises QuadratureError for apparently divergent integrands.
    """
    n = check_dim(n)
    half_pi = 0.5 * math.pi * (1.0 - 1e-14)

    def value(m):
        u, w = _leggauss(m)
        uu = 0.5 * (u + 1.0) * half_pi
        r = np.tan(uu)
        jac = 1.0 + r * r
        vals = np.asarray(g(r), float)
        return float(np.sum(0.5 * half_pi * w * jac * vals * r ** (n - 1)))

    prev = value(start_nodes)
    m = start_nodes * 2
    while m <= max_nodes:
        cur = value(m)
        if not np.isfinite(cur):
            raise QuadratureError("integrand not integrable (non-finite value)",
                                  best=prev, err_estimate=math.inf)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return omega(n - 1) * cur
        prev = cur
        m *= 2
    raise QuadratureError("radial quadrature did not converge (divergent tail?)",
                          best=omega(n - 1) * prev, err_estimate=abs(cur - prev))


# ---------------------------------------------------------------------------
# ODE driver
# ---------------------------------------------------------------------------

@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray           # (len(state), m)
    terminal: str           # "event" | "budget"
    event_index: int        # -1 when terminal == "budget"
    t_end: float
    y_end: np.ndarray
    nfev: int


def ode_integrate(field, init, events, spec: OdeSpec, t_max=None):
    """Adaptive RK45 integration with terminal event detection.

    events: callables e(t, y) -> float, "satisfied" when the value crosses
    zero going downward. An event that starts negative is inert until its
    value first becomes positive (upward crossings never fire). The first
    satisfied event stops the run. Deterministic for fixed inputs.
    """
    y0 = np.asarray(init, float)
    horizon = float(t_max) if t_max is not None else spec.t_budget

    wrapped = []
    for ev in events:
        def make(e):
            def g(t, y):
                return float(e(t, y))
            g.terminal = True
            g.direction = -1
            return g
        wrapped.append(make(ev))

    sol = solve_ivp(field, (0.0, horizon), y0, method="RK45",
                    rtol=spec.rtol, atol=spec.atol,
                    first_step=min(spec.initial_step, horizon / 2),
                    events=wrapped, dense_output=False)
    if sol.status < 0:
        raise OdeStiffnessError(f"integrator failed: {sol.message}", partial=sol)
    if sol.status == 1:
        idx = next(i for i, te in enumerate(sol.t_events) if te.size > 0)
        t_end = float(sol.t_events[idx][0])
        y_end = sol.y_events[idx][0]
        return OdeResult(sol.t, sol.y, "event", idx, t_end, np.asarray(y_end, float),
                         sol.nfev)
    return OdeResult(sol.t, sol.y, "budget", -1, float(sol.t[-1]), sol.y[:, -1].copy(),
                     sol.nfev)

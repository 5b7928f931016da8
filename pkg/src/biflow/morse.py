"""Catalogued weight fields, their critical points, and the bookkeeping of
critical points at infinity.

A weight field K(x) = base + quad |x|^2 + sum_j amp_j exp(-|x-c_j|^2/(2 w_j^2))
keeps every derivative closed-form. Atom centers must span at most three
dimensions so integrals against K stay inside the reduced-frame rules.

Membership of a critical point y among the critical points at infinity:
  n >= 7:  -Delta K(y) > 0,
  n  = 6:  -Delta K(y)/(60 K(y)) + H(y, y) > 0,
with single level S_n^{4/n} K(y)^{-(n-4)/n} and index n - index(K, y); pairs
(n >= 7) require the condition at both points, with level
S_n^{4/n} (K(y_i)^{(4-n)/4} + K(y_j)^{(4-n)/4})^{4/n} and index
2n - index_i - index_j + 1.
"""
from dataclasses import dataclass, field
import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp

from . import constants as cn
from . import green
from .numerics import check_dim


class KField:
    def __init__(self, n, base=1.0, quad=0.0, atoms=(), name="custom"):
        self.n = check_dim(n)
        self.base = float(base)
        self.quad = float(quad)
        self.atoms = []
        for amp, c, w in atoms:
            c = np.asarray(c, float)
            if c.shape != (n,):
                raise ValueError("atom center dimension mismatch")
            if w <= 0:
                raise ValueError("atom width must be positive")
            self.atoms.append((float(amp), c, float(w)))
        self.name = name
        if self._min_on_ball_sample() <= 0:
            raise ValueError("field must be positive on the closed ball")

    def _min_on_ball_sample(self, m=4096, seed=7):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((m, self.n))
        x *= (rng.uniform(0, 1, m) ** (1.0 / self.n)
              / np.linalg.norm(x, axis=1))[:, None]
        return float(np.min(self.k(x)))

    def _gaussians(self, x):
        X = np.atleast_2d(np.asarray(x, float))
        out = []
        for amp, c, w in self.atoms:
            d = X - c[None, :]
            r2 = np.einsum("ij,ij->i", d, d)
            out.append((amp * np.exp(-r2 / (2.0 * w * w)), d, w))
        return X, out

    def k(self, x):
        x = np.asarray(x, float)
        single = x.ndim == 1
        X, gs = self._gaussians(x)
        val = self.base + self.quad * np.einsum("ij,ij->i", X, X)
        for g, _, _ in gs:
            val = val + g
        return float(val[0]) if single else val

    def grad(self, x):
        x = np.asarray(x, float)
        if x.ndim != 1:
            raise ValueError("single point expected")
        X, gs = self._gaussians(x)
        out = 2.0 * self.quad * x
        for g, d, w in gs:
            out = out - g[0] * d[0] / (w * w)
        return out

    def hess(self, x):
        x = np.asarray(x, float)
        _, gs = self._gaussians(x)
        H = 2.0 * self.quad * np.eye(self.n)
        for g, d, w in gs:
            dd = d[0]
            H = H + g[0] * (np.outer(dd, dd) / w ** 4 - np.eye(self.n) / w ** 2)
        return H

    def lap(self, x):
        x = np.asarray(x, float)
        single = x.ndim == 1
        X, gs = self._gaussians(x)
        out = np.full(X.shape[0], 2.0 * self.n * self.quad)
        for g, d, w in gs:
            r2 = np.einsum("ij,ij->i", d, d)
            out = out + g * (r2 / w ** 4 - self.n / w ** 2)
        return float(out[0]) if single else out

    def frame_points(self):
        return [c for _, c, _ in self.atoms]

    def boundary_normal_derivative(self, xhat):
        """dK/dnu at the boundary point xhat (|xhat| = 1)."""
        return float(self.grad(np.asarray(xhat, float)) @ np.asarray(xhat, float))


CATALOGUE = ("const", "single_bump", "two_bump", "three_bump", "borderline6")


def catalogued_k(name, n, width=None):
    check_dim(n)
    e1 = np.zeros(n); e1[0] = 1.0
    e2 = np.zeros(n)
    if n >= 2:
        e2[1] = 1.0
    if name == "const":
        return KField(n, base=1.0, name="const")
    if name == "single_bump":
        return KField(n, base=2.0, quad=-0.3,
                      atoms=[(0.25, 0.1 * e1, 0.5)], name="single_bump")
    if name == "two_bump":
        return KField(n, base=1.0, quad=-0.2,
                      atoms=[(0.9, 0.45 * e1, 0.25), (0.75, -0.45 * e1, 0.25)],
                      name="two_bump")
    if name == "three_bump":
        return KField(n, base=1.0, quad=-0.15,
                      atoms=[(0.8, 0.45 * e1, 0.22),
                             (0.7, -0.33 * e1 + 0.33 * e2, 0.22),
                             (0.65, -0.25 * e1 - 0.38 * e2, 0.22)],
                      name="three_bump")
    if name == "borderline6":
        if n != 6:
            raise ValueError("borderline6 is a six-dimensional field")
        w = 0.25 if width is None else float(width)
        return KField(6, base=2.0, quad=-0.3,
                      atoms=[(-0.5, 0.1 * e1, w)], name=f"borderline6(w={w:g})")
    raise KeyError(f"unknown catalogue entry {name!r}; have {CATALOGUE}")


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    y: np.ndarray
    k_value: float
    laplacian_k: float
    morse_index: int
    hessian_eigs: np.ndarray
    degenerate: bool

    def condition_value(self, n):
        """Sign quantity deciding membership at infinity (see module doc)."""
        if n >= 7:
            return -self.laplacian_k
        return (-self.laplacian_k / (60.0 * self.k_value)
                + green.robin(self.y, n))


def _newton(K, x0, iters=60, tol=1e-13):
    x = np.asarray(x0, float).copy()
    for _ in range(iters):
        g = K.grad(x)
        H = K.hess(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        # damped away from the trust region
        sn = np.linalg.norm(step)
        if sn > 0.3:
            step *= 0.3 / sn
        x = x - step
        if np.linalg.norm(x) > 1.2:
            return None
        if np.linalg.norm(K.grad(x)) < tol:
            return x
    return x if np.linalg.norm(K.grad(x)) < 1e-9 else None


def _seed_cloud(K):
    n = K.n
    seeds = [np.zeros(n)]
    centers = K.frame_points()
    for c in centers:
        seeds.append(c.copy())
    for c1, c2 in itertools.combinations(centers, 2):
        seeds.append(0.5 * (c1 + c2))
    # grid over the atom span (dimension <= 3), plus a few radii along axes
    if centers:
        A = np.array(centers)
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        q = int(np.sum(s > 1e-12))
        E = vt[:q].T
        ticks = np.linspace(-0.8, 0.8, 7)
        for combo in itertools.product(ticks, repeat=q):
            z = E @ np.array(combo)
            if np.linalg.norm(z) < 0.9:
                seeds.append(z)
    else:
        for k in range(n):
            for r in (-0.5, 0.5):
                z = np.zeros(n); z[k] = r
                seeds.append(z)
    return seeds


def find_critical_points(K: KField, interior_margin=1e-3):
    """All interior critical points reachable from the deterministic seed set."""
    found = []
    for s in _seed_cloud(K):
        y = _newton(K, s)
        if y is None or np.linalg.norm(y) >= 1.0 - interior_margin:
            continue
        if any(np.linalg.norm(y - f) < 1e-7 for f in found):
            continue
        found.append(y)
    out = []
    for y in sorted(found, key=lambda z: -K.k(z)):
        H = K.hess(y)
        eigs = np.linalg.eigvalsh(H)
        scale = float(np.max(np.abs(eigs))) or 1.0
        y = y.copy(); y.flags.writeable = False
        out.append(CriticalPoint(y=y, k_value=float(K.k(y)),
                                 laplacian_k=float(K.lap(y)),
                                 morse_index=int(np.sum(eigs < 0)),
                                 hessian_eigs=eigs,
                                 degenerate=bool(np.min(np.abs(eigs)) < 1e-8 * scale)))
    return out


# ---------------------------------------------------------------------------
# critical points at infinity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CpiRecord:
    kind: str                 # "single" | "pair"
    points: tuple             # critical points involved
    member: bool
    level: float
    index_at_infinity: int
    condition_values: tuple


def single_level(K, y, n):
    return cn.s_n(n) ** (4.0 / n) * K.k(y) ** (-(n - 4.0) / n)


def pair_level(K, yi, yj, n):
    s = K.k(yi) ** ((4.0 - n) / 4.0) + K.k(yj) ** ((4.0 - n) / 4.0)
    return cn.s_n(n) ** (4.0 / n) * s ** (4.0 / n)


def enumerate_cpi_single(K: KField, crits=None):
    n = K.n
    crits = crits if crits is not None else find_critical_points(K)
    out = []
    for cp in crits:
        cond = cp.condition_value(n)
        out.append(CpiRecord(kind="single", points=(cp,), member=bool(cond > 0),
                             level=single_level(K, cp.y, n),
                             index_at_infinity=n - cp.morse_index,
                             condition_values=(cond,)))
    return out


def enumerate_cpi_pairs(K: KField, crits=None):
    """Pairs of distinct critical points, each satisfying the sign condition.

    The n >= 7 rule is exact; for n = 6 the same per-point H-corrected sign
    is used, which ignores the cross term H(y_i, y_j) (adequate for
    well-separated catalogue points).
    """
    n = K.n
    crits = crits if crits is not None else find_critical_points(K)
    out = []
    for ci, cj in itertools.combinations(crits, 2):
        vi, vj = ci.condition_value(n), cj.condition_value(n)
        out.append(CpiRecord(kind="pair", points=(ci, cj),
                             member=bool(vi > 0 and vj > 0),
                             level=pair_level(K, ci.y, cj.y, n),
                             index_at_infinity=(2 * n - ci.morse_index
                                                - cj.morse_index + 1),
                             condition_values=(vi, vj)))
    return out


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------

@dataclass
class AssumptionReport:
    field_name: str
    n: int
    critical_points: list
    a0_inward: bool
    a0_max_normal_derivative: float
    a1_nondegenerate: bool
    a1_distinct_values: bool
    a2_split_index: int        # l: first l (by decreasing K) positive, rest negative; -1 if no split
    a2_holds: bool
    a5_connections: list       # (i, j) heteroclinic connections found by shooting
    a5_holds: bool
    a7_by_class: dict          # index class k -> bool (vacuously True when empty)
    notes: str = ""

    def summary_lines(self):
        yield f"field {self.field_name} (n={self.n}): {len(self.critical_points)} critical points"
        yield f"  (A0) inward boundary derivative: {'ok' if self.a0_inward else 'FAIL'} (max dK/dnu = {self.a0_max_normal_derivative:.4g})"
        yield f"  (A1) nondegenerate, distinct values: {'ok' if self.a1_nondegenerate and self.a1_distinct_values else 'FAIL'}"
        yield f"  (A2) sign split at l = {self.a2_split_index}: {'ok' if self.a2_holds else 'FAIL'}"
        yield f"  (A5) stable/unstable intersections: {'ok' if self.a5_holds else 'found ' + str(self.a5_connections)}"
        for k, v in sorted(self.a7_by_class.items()):
            yield f"  (A7) index class {k}: {'ok' if v else 'FAIL'}"


def _shoot_connections(K, crits, t_max=60.0):
    """Heteroclinic connections of dx/dt = grad K violating (A5): orbits
    leaving a critical point with -Delta K < 0 and ending at one with
    -Delta K > 0. Sampling along unstable eigendirections only; this can
    find violations, not certify their absence."""
    n = K.n
    conns = set()

    def rhs(t, x):
        return K.grad(x)

    sources = [(j, cp) for j, cp in enumerate(crits) if cp.laplacian_k > 0]
    sinks = [(i, cq) for i, cq in enumerate(crits) if cq.laplacian_k < 0]
    for j, cp in sources:
        H = K.hess(cp.y)
        eigs, vecs = np.linalg.eigh(H)
        for k in range(n):
            if eigs[k] <= 0:
                continue
            for sgn in (+1.0, -1.0):
                x0 = cp.y + sgn * 1e-4 * vecs[:, k]
                sol = solve_ivp(rhs, (0.0, t_max), x0, rtol=1e-8, atol=1e-10,
                                dense_output=False)
                xe = sol.y[:, -1]
                if np.linalg.norm(xe) >= 1.0:
                    continue
                for i, cq in sinks:
                    if i != j and np.linalg.norm(xe - cq.y) < 1e-4:
                        conns.add((j, i))
    return sorted(conns)


def check_assumptions(K: KField, x_dim=None):
    """Evaluate (A0), (A1), (A2), (A5), (A7) on a field.

    (A5) is a sampling check along unstable eigendirections; (A7) is reported
    per index class k (the comparison 2 K(y_max)^{-(n-4)/4} strictly less
    than K(y)^{-(n-4)/4} for critical points of index n-(k+1) with
    -Delta K > 0).
    """
    n = K.n
    crits = find_critical_points(K)
    # A0
    rng = np.random.default_rng(11)
    xb = rng.standard_normal((512, n))
    xb /= np.linalg.norm(xb, axis=1, keepdims=True)
    nder = np.array([K.boundary_normal_derivative(x) for x in xb])
    a0_max = float(np.max(nder))
    # A1
    nondeg = all(not c.degenerate for c in crits)
    kv = sorted(c.k_value for c in crits)
    distinct = all(abs(kv[i + 1] - kv[i]) > 1e-10 for i in range(len(kv) - 1))
    # A2: points come sorted by decreasing K; want signs + ... + - ... -
    signs = [c.condition_value(n) > 0 for c in crits]
    split = -1
    for l in range(len(signs) + 1):
        if all(signs[:l]) and not any(signs[l:]):
            split = l
            break
    # A5
    conns = _shoot_connections(K, crits)
    # A7: per class k, compare the global max against maxima of the class
    ymax = crits[0] if crits else None
    a7 = {}
    if ymax is not None:
        for c in crits:
            if c is ymax or -c.laplacian_k <= 0:
                continue
            kclass = n - 1 - c.morse_index   # index(K, y) = n - (k+1)
            if kclass < 0:
                continue
            lhs = 2.0 * ymax.k_value ** (-(n - 4.0) / 4.0)
            rhs = c.k_value ** (-(n - 4.0) / 4.0)
            a7[kclass] = a7.get(kclass, True) and (lhs < rhs)
    return AssumptionReport(field_name=K.name, n=n, critical_points=crits,
                            a0_inward=bool(a0_max < 0),
                            a0_max_normal_derivative=a0_max,
                            a1_nondegenerate=nondeg,
                            a1_distinct_values=distinct,
                            a2_split_index=split,
                            a2_holds=split >= 0,
                            a5_connections=conns,
                            a5_holds=len(conns) == 0,
                            a7_by_class=a7)

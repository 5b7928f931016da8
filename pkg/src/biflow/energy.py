"""The variational energy, its multi-bubble expansion, and gradient pairings.

Conventions. J(u) = (int K |u|^{2n/(n-4)})^{-(n-4)/n} on the unit sphere of
the energy norm, extended zero-homogeneously elsewhere; expansions hold for
u written with unit norm, so all formulas below consume normalized weights
alpha_hat = alpha / ||u||. Pairings against parameter derivatives of a
projected bubble are what the expansion displays denote by
(dJ, lam dPdelta/dlam)_2 and (dJ, lam^{-1} dPdelta/da)_2; the finite
difference route recovers them as d/ds J / alpha_hat_i for the matching
one-parameter family.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import constants as cn
from . import green
from .bubbles import Bubble, eps_pair, eps_derivs
from .projection import Configuration, ProjectedBubble, inner_product
from .numerics import QuadratureSpec, reduced_polar_rule


def _den_rule(cfg: Configuration, K, spec: QuadratureSpec):
    return reduced_polar_rule(cfg.n, cfg.peaks(), region="ball",
                              extra_anchors=K.frame_points(),
                              n_radial=spec.n_radial, n_angular=spec.n_angular)


def _j_from_gram(cfg: Configuration, K, spec: QuadratureSpec, M=None):
    n = cfg.n
    p = cn.critical_exponent(n)
    M = cfg.gram(spec) if M is None else M
    num = float(cfg.alphas @ M @ cfg.alphas)
    rule = _den_rule(cfg, K, spec)
    u = cfg.u_eval(rule.points)
    den = float(rule.weights @ (K.k(rule.points) * np.abs(u) ** (p + 1.0)))
    return num * den ** (-(n - 4.0) / n), num, den


def j_quadrature(cfg: Configuration, K, spec: QuadratureSpec = None):
    """J at the configuration, by direct quadrature (scale invariant)."""
    spec = spec or QuadratureSpec()
    return _j_from_gram(cfg, K, spec)[0]


def normalized_alphas(cfg: Configuration, spec: QuadratureSpec = None,
                      norm_sq=None):
    """alpha / ||u||; with no spec the norm uses the leading S_n diagonal."""
    if norm_sq is None:
        if spec is None:
            norm_sq = float(np.sum(cfg.alphas ** 2)) * cn.s_n(cfg.n)
        else:
            norm_sq = cfg.norm_sq(spec)
    return cfg.alphas / math.sqrt(norm_sq)


@dataclass
class EnergyReport:
    n: int
    j_expansion: float
    breakdown: dict
    remainder_estimate: float
    j_quadrature: float = math.nan
    j_gap_rel: float = math.nan

    def lines(self):
        yield f"J expansion  = {self.j_expansion:.10g}"
        for k, v in self.breakdown.items():
            yield f"  {k:12s} {v:+.10g}"
        yield f"  remainder    ~{self.remainder_estimate:.3g}"
        if math.isfinite(self.j_quadrature):
            yield f"J quadrature = {self.j_quadrature:.10g}"
            yield f"relative gap = {self.j_gap_rel:.3e}"


def _boundary_distances(cfg):
    return [1.0 - float(np.linalg.norm(b.a)) for b in cfg.bubbles]


def j_expansion(cfg: Configuration, K, spec: QuadratureSpec = None,
                with_quadrature=False):
    """Multi-bubble expansion of J; breakdown sums exactly to the total.

    Terms: the interior interaction-free leading value, then the
    curvature (Delta K / lam^2), self-boundary (H(a,a)/lam^{n-4}) and
    pair-interaction (eps - H/(lam lam')^{(n-4)/2}) corrections, each in the
    bracket scaled by the leading factor.
    """
    n = cfg.n
    bs = cfg.bubbles
    al = cfg.alphas
    k = len(bs)
    kv = np.array([K.k(b.a) for b in bs])
    lap = np.array([K.lap(b.a) for b in bs])
    lam = np.array([b.lam for b in bs])
    c2v, c3v, snv = cn.c2(n), cn.c3(n), cn.s_n(n)

    lead = (snv ** (4.0 / n) * float(np.sum(al ** 2))
            / float(np.sum(al ** (2.0 * n / (n - 4.0)) * kv)) ** ((n - 4.0) / n))
    pref = 1.0 / (snv * float(np.sum(kv ** ((4.0 - n) / 4.0))))

    curv = -(n - 4.0) / n * c3v * float(np.sum(lap / (kv ** (n / 4.0) * lam ** 2)))
    selfb = c2v * float(np.sum([green.robin(b.a, n) / (kv[i] ** ((n - 4.0) / 4.0)
                                                       * lam[i] ** (n - 4.0))
                                for i, b in enumerate(bs)]))
    inter = 0.0
    eps_sum = 0.0
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            e = eps_pair(bs[i], bs[j])
            eps_sum += e
            hij = green.regular_part_H(bs[i].a, bs[j].a, n)
            inter -= (c2v / (kv[i] * kv[j]) ** ((n - 4.0) / 8.0)
                      * (e - hij / (lam[i] * lam[j]) ** ((n - 4.0) / 2.0)))

    breakdown = {
        "leading": lead,
        "curvature": lead * pref * curv,
        "boundary_self": lead * pref * selfb,
        "interaction": lead * pref * inter,
    }
    total = 0.0
    for v in breakdown.values():
        total += v
    d = _boundary_distances(cfg)
    rem = float(np.sum(1.0 / lam ** 2)
                + np.sum([(lam[i] * d[i]) ** (4.0 - n) for i in range(k)])
                + eps_sum)
    rep = EnergyReport(n=n, j_expansion=total, breakdown=breakdown,
                       remainder_estimate=lead * pref * rem)
    if with_quadrature:
        spec = spec or QuadratureSpec()
        rep.j_quadrature = j_quadrature(cfg, K, spec)
        rep.j_gap_rel = abs(rep.j_quadrature - total) / rep.j_quadrature
    return rep


def energy_report(cfg, K, spec: QuadratureSpec = None):
    return j_expansion(cfg, K, spec, with_quadrature=True)


# ---------------------------------------------------------------------------
# gradient pairings
# ---------------------------------------------------------------------------

def grad_pairing_expansion(cfg: Configuration, K, direction, j_value=None,
                           alphas_normalized=None):
    """Expansion value of the gradient pairing in one parameter direction.

    direction: ("lam", i) for (dJ, lam_i dPdelta_i/dlam_i)_2, scalar;
               ("a", i) for (dJ, lam_i^{-1} dPdelta_i/da_i)_2, an n-vector.
    The diagonal H derivative is the full derivative of a -> H(a,a); c4 uses
    its closed form.
    """
    n = cfg.n
    i = direction[1]
    bs = cfg.bubbles
    bi = bs[i]
    ah = (alphas_normalized if alphas_normalized is not None
          else normalized_alphas(cfg))
    J = j_value if j_value is not None else j_expansion(cfg, K).j_expansion
    c2v = cn.c2(n)
    m = (n - 4.0) / 2.0

    if direction[0] == "lam":
        val = ((n - 4.0) / n * cn.c3(n) * ah[i] * K.lap(bi.a)
               / (K.k(bi.a) * bi.lam ** 2))
        val -= ((n - 4.0) / 2.0 * c2v * ah[i]
                * green.robin(bi.a, n) / bi.lam ** (n - 4.0))
        for j, bj in enumerate(bs):
            if j == i:
                continue
            dl, _ = eps_derivs(bi, bj)
            hij = green.regular_part_H(bi.a, bj.a, n)
            val -= c2v * ah[j] * (dl + (n - 4.0) / 2.0 * hij
                                  / (bi.lam * bj.lam) ** m)
        return 2.0 * J * val

    if direction[0] == "a":
        val = (-cn.c4_closed_form(n) * ah[i] ** ((n + 4.0) / (n - 4.0))
               * J ** (n / (n - 4.0)) * K.grad(bi.a) / bi.lam)
        val = val + (c2v / 2.0 * ah[i] / bi.lam ** (n - 3.0)
                     * green.grad_robin(bi.a, n))
        for j, bj in enumerate(bs):
            if j == i:
                continue
            _, da = eps_derivs(bi, bj)
            gh = green.grad_H(bi.a, bj.a, n)
            gate = 1.0 - J ** (n / (n - 4.0)) * (
                ah[i] ** (8.0 / (n - 4.0)) * K.k(bi.a)
                + ah[j] ** (8.0 / (n - 4.0)) * K.k(bj.a))
            val = val + c2v * ah[j] * gate * (
                da - gh / ((bi.lam * bj.lam) ** m * bi.lam))
        return 2.0 * J * val

    raise ValueError(f"unknown direction {direction!r}")


@dataclass
class PairingReport:
    direction: tuple
    pairing: float              # normalized FD value (Richardson)
    fd_h: float
    fd_h2: float
    noise_floor: float
    j_value: float
    alphas_normalized: np.ndarray
    expansion: float = math.nan
    rel_gap: float = math.nan
    below_noise: bool = False


def _perturbed(cfg, direction, s):
    i = direction[1]
    bs = list(cfg.bubbles)
    b = bs[i]
    if direction[0] == "lam":
        bs[i] = b.with_params(lam=b.lam * math.exp(s))
    elif direction[0] == "a":
        e = np.asarray(direction[2], float)
        bs[i] = b.with_params(a=b.a + (s / b.lam) * e)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return Configuration(bs, cfg.alphas, cfg.mode)


def grad_pairing_fd(cfg: Configuration, K, direction,
                    spec: QuadratureSpec = None, h=1e-3,
                    compare_expansion=False):
    """Finite-difference gradient pairing in one direction.

    direction: ("lam", i) or ("a", i, unit_vector). Central differences at
    steps h and h/2 with one Richardson stage; the reported value equals the
    expansion displays' left-hand side (normalized weights).
    """
    spec = spec or QuadratureSpec()
    M = cfg.gram(spec)
    norm = math.sqrt(float(cfg.alphas @ M @ cfg.alphas))
    ah = cfg.alphas / norm
    J0, _, _ = _j_from_gram(cfg, K, spec, M)

    def jval(s):
        return _j_from_gram(_perturbed(cfg, direction, s), K, spec)[0]

    jp, jm = jval(h), jval(-h)
    jp2, jm2 = jval(h / 2), jval(-h / 2)
    fd_h = (jp - jm) / (2.0 * h)
    fd_h2 = (jp2 - jm2) / h
    rich = (4.0 * fd_h2 - fd_h) / 3.0
    i = direction[1]
    pairing = rich * norm / cfg.alphas[i]
    noise = (abs(rich - fd_h2) * norm / cfg.alphas[i]
             + spec.rel_tol * J0 * norm / (h * cfg.alphas[i]))
    rep = PairingReport(direction=direction, pairing=pairing, fd_h=fd_h,
                        fd_h2=fd_h2, noise_floor=noise, j_value=J0,
                        alphas_normalized=ah,
                        below_noise=abs(pairing) < noise)
    if compare_expansion:
        exp = grad_pairing_expansion(cfg, K, direction[:2], j_value=J0,
                                     alphas_normalized=ah)
        if direction[0] == "a":
            exp = float(np.asarray(exp) @ np.asarray(direction[2], float))
        rep.expansion = exp
        scale = max(abs(exp), abs(pairing), 1e-300)
        rep.rel_gap = abs(exp - pairing) / scale
    return rep


# ---------------------------------------------------------------------------
# positivity diagnostics
# ---------------------------------------------------------------------------

@dataclass
class NegativePartReport:
    log_indicator: float
    member: bool
    neg_mass: float
    eta: float

    @property
    def indicator(self):
        try:
            return math.exp(self.log_indicator)
        except OverflowError:
            return math.inf


def negative_part_indicator(values, weights, n, j_value, eta=1e-2):
    """Membership quantity of the positivity neighborhood.

    Computes J^{(2n-4)/(n-4)} e^{2J} |u^-|_{L^{2n/(n-4)}}^{8/(n-4)} in log
    space (the e^{2J} factor overflows otherwise) and compares against eta.
    u^- = max(0, -u) on the supplied quadrature nodes.
    """
    v = np.asarray(values, float)
    w = np.asarray(weights, float)
    um = np.maximum(0.0, -v)
    q = 2.0 * n / (n - 4.0)
    mass = float(w @ um ** q)
    if mass <= 0.0:
        return NegativePartReport(log_indicator=-math.inf, member=True,
                                  neg_mass=0.0, eta=eta)
    logind = ((2.0 * n - 4.0) / (n - 4.0) * math.log(j_value) + 2.0 * j_value
              + (4.0 / n) * math.log(mass))
    return NegativePartReport(log_indicator=logind,
                              member=logind < math.log(eta),
                              neg_mass=mass, eta=eta)

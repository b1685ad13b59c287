"""Divergences between observation densities and the mixed discrimination exponent.

Two density families are supported: finite distributions given as 1-D
probability vectors, and univariate Gaussians.  All divergences use natural
logarithms.  Probabilities below ``ZERO_PROB`` are treated as exact zeros,
with the usual conventions 0*log(0/q) = 0 and p*log(p/0) = +inf for p > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

# Below this, a probability is considered an exact zero.
ZERO_PROB = 1e-300

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Gaussian:
    """A univariate Gaussian observation density."""

    mean: float
    var: float

    def __post_init__(self):
        if not (self.var > 0.0 and math.isfinite(self.var)):
            raise ValueError(f"variance must be positive and finite, got {self.var}")
        if not math.isfinite(self.mean):
            raise ValueError(f"mean must be finite, got {self.mean}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def log_density(self, z: float) -> float:
        return -0.5 * math.log(2.0 * math.pi * self.var) - (z - self.mean) ** 2 / (2.0 * self.var)

    def density(self, z: float) -> float:
        return math.exp(self.log_density(z))


def _as_pmf(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise ValueError("finite density must be a 1-D probability vector")
    return arr


def _check_same_domain(p, q):
    p_gauss = isinstance(p, Gaussian)
    q_gauss = isinstance(q, Gaussian)
    if p_gauss != q_gauss:
        raise DomainError("cannot compare a finite density with a Gaussian density")
    if not p_gauss:
        p, q = _as_pmf(p), _as_pmf(q)
        if p.shape != q.shape:
            raise DomainError(f"finite densities have different alphabets: {p.shape} vs {q.shape}")
        return p, q
    return p, q


def kl(p, q) -> float:
    """Kullback-Leibler divergence D(p || q) in nats.

    Returns +inf when p puts mass where q has none.  For Gaussians the
    closed form log(s_q/s_p) + (s_p^2 + (m_p - m_q)^2) / (2 s_q^2) - 1/2
    is used.
    """
    p, q = _check_same_domain(p, q)
    if isinstance(p, Gaussian):
        return (
            0.5 * math.log(q.var / p.var)
            + (p.var + (p.mean - q.mean) ** 2) / (2.0 * q.var)
            - 0.5
        )
    p = np.where(p > ZERO_PROB, p, 0.0)
    q = np.where(q > ZERO_PROB, q, 0.0)
    support = p > 0.0
    if np.any(support & (q == 0.0)):
        return math.inf
    ps = p[support]
    qs = q[support]
    return float(np.sum(ps * (np.log(ps) - np.log(qs))))


def renyi(p, q, alpha: float) -> float:
    """Renyi divergence D_alpha(p || q) of order alpha in [0, 1].

    D_alpha = -(1/(1-alpha)) * log sum p^alpha q^(1-alpha); at alpha = 1 this
    is the KL divergence.  Only the order range [0, 1] needed by the
    discrimination exponent is supported.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 1.0:
        return kl(p, q)
    p, q = _check_same_domain(p, q)
    if isinstance(p, Gaussian):
        value = _gaussian_tilted_exponent(p, q, alpha)
        return value / (1.0 - alpha)
    m = _finite_tilted_mass(_as_pmf(p), _as_pmf(q), alpha)
    if m == 0.0:
        return math.inf
    return -math.log(m) / (1.0 - alpha)


def _finite_tilted_mass(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    """sum_z p^alpha q^(1-alpha) over the common support."""
    both = (p > ZERO_PROB) & (q > ZERO_PROB)
    if not np.any(both):
        return 0.0
    lp = np.log(p[both])
    lq = np.log(q[both])
    return float(np.sum(np.exp(alpha * lp + (1.0 - alpha) * lq)))


def _gaussian_tilted_exponent(p: Gaussian, q: Gaussian, alpha: float) -> float:
    """(1 - alpha) * D_alpha(p || q) for Gaussians, smooth on all of [0, 1].

    With v* = alpha*v_q + (1-alpha)*v_p:
        (1-a) D_a = (1-a) log(s_q/s_p) - 0.5 log(v_q/v*) + a(1-a) dm^2 / (2 v*)
    The mixture variance v* is positive for every alpha in [0, 1].
    """
    vstar = alpha * q.var + (1.0 - alpha) * p.var
    dm = p.mean - q.mean
    return (
        (1.0 - alpha) * 0.5 * math.log(q.var / p.var)
        - 0.5 * math.log(q.var / vstar)
        + alpha * (1.0 - alpha) * dm * dm / (2.0 * vstar)
    )


def tilted_exponent(p, q, alpha: float) -> float:
    """(1 - alpha) * D_alpha(p || q), finite-sample discrimination exponent.

    Equals -log sum_z p^alpha q^(1-alpha) for finite densities; continuous in
    alpha on [0, 1] with value 0 at both endpoints for full-support pairs.
    Symmetric under (p, q, alpha) -> (q, p, 1 - alpha).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    p, q = _check_same_domain(p, q)
    if isinstance(p, Gaussian):
        return _gaussian_tilted_exponent(p, q, alpha)
    m = _finite_tilted_mass(_as_pmf(p), _as_pmf(q), alpha)
    if m == 0.0:
        return math.inf
    return -math.log(m)


@dataclass(frozen=True)
class AlphaOptimum:
    """Maximizer and value of the mixed discrimination exponent."""

    alpha_star: float
    value: float


def _golden_max(g, lo: float = 0.0, hi: float = 1.0, bracket_tol: float = 1e-9):
    """Golden-section search for the maximum of a concave scalar function."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = g(c), g(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    while (b - a) > bracket_tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = g(c)
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = g(d)
            if fd > best_f:
                best_x, best_f = d, fd
    for x in (lo, hi, 0.5 * (a + b)):
        fx = g(x)
        if fx > best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def alpha_max(model, i: int, j: int, weights) -> AlphaOptimum:
    """Maximize sum_a w_a * (1-alpha) * D_alpha(q_i^a || q_j^a) over alpha in [0, 1].

    The objective is concave in alpha, so a golden-section search with a
    1e-9 bracket tolerance locates the maximizer.  ``weights`` is a point on
    the action simplex.
    """
    if i == j:
        raise ValueError("hypotheses must be distinct")
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    if w.shape != (model.K,):
        raise ValueError(f"weights must have length {model.K}")
    curves = [
        (w[a], model.density_of(i, a), model.density_of(j, a))
        for a in range(model.K)
        if w[a] > 0.0
    ]

    def g(alpha: float) -> float:
        total = 0.0
        for wa, p, q in curves:
            term = tilted_exponent(p, q, alpha)
            if math.isinf(term):
                return math.inf
            total += wa * term
        return total

    alpha_star, value = _golden_max(g)
    return AlphaOptimum(alpha_star=alpha_star, value=value)

"""Poisson-Dirichlet process prior pieces.

Stick-breaking weights (prior-predictive checks only), the generalized
Pólya urn, the exchangeable partition probability function, the shifted
gamma / beta hyperprior on the discount ``a`` and strength ``b``, and the
family-specific centering measures.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import betaln, gammaln

from .copulas import JOE_LOWER, CopulaFamily, Theta, tau_of

__all__ = [
    "PDHyper",
    "HyperPrior",
    "CenteringMeasure",
    "stick_breaking_weights",
    "urn_weights",
    "eppf_log",
    "hyperprior_logdensity",
    "centering_sample",
    "centering_logdensity",
    "mixture_tau",
]


@dataclass(frozen=True)
class PDHyper:
    """Discount ``a`` in [0, 1) and strength ``b`` > -a."""

    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < 1.0):
            raise ValueError(f"discount a must lie in [0, 1), got {self.a}")
        if not self.b > -self.a:
            raise ValueError(f"strength b must exceed -a, got b={self.b}, a={self.a}")


@dataclass(frozen=True)
class HyperPrior:
    """f(a, b) = Ga(b + a | c_b, d_b) Be(a | c_a, d_a)."""

    c_a: float = 1.0
    d_a: float = 20.0
    c_b: float = 1.0
    d_b: float = 20.0

    def __post_init__(self):
        for name in ("c_a", "d_a", "c_b", "d_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"hyperprior parameter {name} must be positive")

    def sample(self, rng, size=None):
        a = rng.beta(self.c_a, self.d_a, size=size)
        b = rng.gamma(self.c_b, 1.0 / self.d_b, size=size) - a
        return a, b


# shift k of the gamma centering measures, per family and dimension.
_SHIFT = {
    (CopulaFamily.CLA, 2): -1.0,
    (CopulaFamily.JOE, 2): JOE_LOWER,
    (CopulaFamily.GUM, 2): 1.0,
    (CopulaFamily.CLA, 3): 0.0,
    (CopulaFamily.JOE, 3): 1.0,
    (CopulaFamily.GUM, 3): 1.0,
}


@dataclass(frozen=True)
class CenteringMeasure:
    """Prior density g_0 on the copula parameter, supported on Θ.

    AMH: uniform on (-1, 1).  Clayton, Joe, Gumbel: θ - k ~ Ga(shape, rate)
    with k = -1, 0.238734, 1.  Frank: normal with mean and precision.  For
    p > 2 the support shrinks to the positive parameter space (k = 0 for
    Clayton, k = 1 for Joe, uniform on (0, 1) for AMH, normal truncated to
    θ > 0 for Frank).
    """

    family: CopulaFamily
    shape: float = 4.0
    rate: float = 1.0
    mean: float = 0.0
    precision: float = 4.0
    p: int = 2
    shift: float = field(init=False)

    def __post_init__(self):
        fam = CopulaFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        if self.shape <= 0 or self.rate <= 0 or self.precision <= 0:
            raise ValueError("centering measure shape, rate and precision must be positive")
        if self.p < 2:
            raise ValueError("dimension must be >= 2")
        object.__setattr__(self, "shift", _SHIFT.get((fam, min(self.p, 3)), 0.0))

    @property
    def _sd(self):
        return 1.0 / math.sqrt(self.precision)

    def sample(self, rng, size=None) -> np.ndarray:
        fam = self.family
        if fam is CopulaFamily.AMH:
            lo = 0.0 if self.p > 2 else -1.0
            return rng.uniform(lo, 1.0, size=size)
        if fam is CopulaFamily.FRA:
            if self.p > 2:
                a = (0.0 - self.mean) / self._sd
                return stats.truncnorm.rvs(a, np.inf, loc=self.mean, scale=self._sd, size=size, random_state=rng)
            return rng.normal(self.mean, self._sd, size=size)
        return self.shift + rng.gamma(self.shape, 1.0 / self.rate, size=size)

    def logpdf(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        fam = self.family
        inside = fam.contains(th, self.p)
        if fam is CopulaFamily.AMH:
            width = 1.0 if self.p > 2 else 2.0
            val = np.full(th.shape, -math.log(width))
        elif fam is CopulaFamily.FRA:
            val = 0.5 * (math.log(self.precision / (2.0 * math.pi)) - self.precision * (th - self.mean) ** 2)
            if self.p > 2:
                val = val - stats.norm.logsf(0.0, self.mean, self._sd)
        else:
            x = th - self.shift
            with np.errstate(divide="ignore", invalid="ignore"):
                val = (
                    self.shape * math.log(self.rate) - gammaln(self.shape) + (self.shape - 1.0) * np.log(x) - self.rate * x
                )
        out = np.where(inside, val, -np.inf)
        return out if out.ndim else float(out)


def centering_sample(g0: CenteringMeasure, rng) -> Theta:
    return Theta(g0.family, float(g0.sample(rng)))


def centering_logdensity(g0: CenteringMeasure, theta) -> float:
    value = theta.value if isinstance(theta, Theta) else theta
    return g0.logpdf(value)


def stick_breaking_weights(hyper: PDHyper, K: int, rng) -> np.ndarray:
    """First K stick-breaking weights, ν_k ~ Be(1 - a, b + k a)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    k = np.arange(1, K + 1)
    nu = rng.beta(1.0 - hyper.a, hyper.b + k * hyper.a)
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - nu)[:-1]])
    return nu * remaining


def urn_weights(i, thetas_minus_i, hyper: PDHyper, n: int):
    """Pólya-urn weights for θ_i given the other n - 1 parameters.

    Returns ``(new_weight, {atom: weight})``.  ``i`` is only informational:
    the caller has already removed θ_i from ``thetas_minus_i``.
    """
    values = list(thetas_minus_i)
    if len(values) != n - 1:
        raise ValueError(f"expected {n - 1} parameters besides observation {i}, got {len(values)}")
    counts = Counter(values)
    m = len(counts)
    denom = hyper.b + n - 1
    if n == 1:
        return 1.0, {}
    new = (hyper.b + hyper.a * m) / denom
    atoms = {atom: (c - hyper.a) / denom for atom, c in counts.items()}
    return new, atoms


def eppf_log(counts, hyper: PDHyper) -> float:
    """log f(n_1*, ..., n_m* | a, b) of the two-parameter Poisson-Dirichlet."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or counts.size < 1 or np.any(counts < 1):
        raise ValueError("cluster counts must be a non-empty vector of positive integers")
    a, b = hyper.a, hyper.b
    n, m = counts.sum(), counts.size
    out = gammaln(b + 1.0) - gammaln(b + n)
    out += np.sum(np.log(b + a * np.arange(1, m)))
    out += np.sum(gammaln(counts - a)) - m * gammaln(1.0 - a)
    return float(out)


def hyperprior_logdensity(hyper: PDHyper | tuple, hp: HyperPrior) -> float:
    """log Ga(b + a | c_b, d_b) + log Be(a | c_a, d_a); -inf outside support."""
    a, b = (hyper.a, hyper.b) if isinstance(hyper, PDHyper) else hyper
    if not (0.0 <= a < 1.0) or not (b + a > 0.0):
        return -math.inf
    s = b + a
    log_ga = hp.c_b * math.log(hp.d_b) - gammaln(hp.c_b) + (hp.c_b - 1.0) * math.log(s) - hp.d_b * s
    if a == 0.0:
        if hp.c_a < 1.0:
            return math.inf
        log_a_term = 0.0 if hp.c_a == 1.0 else -math.inf
    else:
        log_a_term = (hp.c_a - 1.0) * math.log(a)
    log_be = log_a_term + (hp.d_a - 1.0) * math.log1p(-a) - betaln(hp.c_a, hp.d_a)
    return float(log_ga + log_be)


def mixture_tau(weights, thetas) -> float:
    """Weighted component Kendall's tau of a finite copula mixture, Σ ω_k τ(θ_k).

    This is the quantity the posterior τ estimate targets.  It is not the
    population τ of the mixture distribution, which adds cross terms
    4 Σ_{j≠k} ω_j ω_k E_{C_j}[C_k] and is usually smaller.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("mixture weights must be nonnegative and sum to 1")
    if len(thetas) != w.size:
        raise ValueError("one parameter per weight is required")
    taus = np.array([float(tau_of(t.family, t.value).reshape(-1)[0]) for t in thetas])
    return float(np.dot(w, taus))

"""Marginal Gibbs sampler for the Poisson-Dirichlet copula mixture.

Each iteration runs, in order:

1. an auxiliary-variable reallocation of every observation (Neal's
   Algorithm 8 with ``r_aux`` fresh atoms from the centering measure);
2. a random-walk Metropolis-Hastings refresh of every distinct atom, with a
   uniform proposal truncated to the parameter space;
3. an MH update of the discount ``a`` (truncated uniform random walk);
4. an MH update of the strength ``b`` (gamma random walk on ``b + a``).

Step sizes are tuned in batches of 50 iterations during burn-in only.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import kernels
from .copulas import CopulaFamily, UnsupportedOrderError, impl, log_density
from .prior import CenteringMeasure, HyperPrior, hyperprior_logdensity

__all__ = [
    "AdaptationMode",
    "MCMCConfig",
    "ChainState",
    "PosteriorDraws",
    "CopulaLikelihood",
    "FlatLikelihood",
    "NumericalError",
    "update_labels",
    "refresh_unique",
    "update_a",
    "update_b",
    "adapt_step_sizes",
    "run_chain",
    "init_state",
]

logger = logging.getLogger(__name__)

KAPPA_MIN, KAPPA_MAX = 1e-4, 1e4


class NumericalError(FloatingPointError):
    """A log-density became non-finite where it must be finite."""


class AdaptationMode(str, enum.Enum):
    PAPER = "paper-literal"
    BOUNDED = "bounded"


@dataclass(frozen=True)
class MCMCConfig:
    family: CopulaFamily
    g0: CenteringMeasure | None = None
    hp: HyperPrior = field(default_factory=HyperPrior)
    r_aux: int = 3
    n_iter: int = 15000
    burn_in: int = 5000
    thin: int = 5
    seed: int = 0
    batch_size: int = 50
    target_low: float = 0.3
    target_high: float = 0.4
    adaptation: AdaptationMode = AdaptationMode.BOUNDED
    kappa_theta: float = 1e-1
    kappa_a: float = 1.0
    kappa_b: float = 1.0
    update_hyper: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", CopulaFamily.parse(self.family))
        object.__setattr__(self, "adaptation", AdaptationMode(self.adaptation))
        if self.g0 is None:
            object.__setattr__(self, "g0", CenteringMeasure(self.family))
        elif self.g0.family is not self.family:
            raise ValueError("centering measure family differs from the kernel family")
        if self.r_aux < 1:
            raise ValueError("r_aux must be >= 1")
        if not (0 <= self.burn_in < self.n_iter):
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainState:
    labels: np.ndarray
    theta_star: np.ndarray
    a: float
    b: float
    kappa_theta: float = 0.1
    kappa_a: float = 1.0
    kappa_b: float = 1.0
    iteration: int = 0

    @property
    def m(self) -> int:
        return self.theta_star.size

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.m)

    @property
    def theta(self) -> np.ndarray:
        """Per-observation parameter θ_i."""
        return self.theta_star[self.labels]

    def check(self, family: CopulaFamily | None = None, p: int = 2):
        if self.labels.min(initial=0) < 0 or self.labels.max(initial=-1) >= self.m:
            raise AssertionError("label points outside theta_star")
        if np.any(self.counts == 0):
            raise AssertionError("empty cluster in state")
        if family is not None and not np.all(family.contains(self.theta_star, p)):
            raise AssertionError("atom outside the parameter space")


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws plus per-batch tuning diagnostics."""

    family: CopulaFamily
    iterations: np.ndarray
    a: np.ndarray
    b: np.ndarray
    m: np.ndarray
    labels: np.ndarray
    theta: np.ndarray
    loglik: np.ndarray
    batches: list = field(default_factory=list)

    @property
    def n_kept(self) -> int:
        return self.iterations.size

    @property
    def n(self) -> int:
        return self.labels.shape[1]

    def atoms(self, l: int):
        """(unique θ*, occupancy counts) of kept draw ``l``, in label order."""
        lab = self.labels[l]
        counts = np.bincount(lab)
        first = np.full(counts.size, -1)
        for idx in range(lab.size - 1, -1, -1):
            first[lab[idx]] = idx
        return self.theta[l][first], counts

    def subset(self, idx) -> "PosteriorDraws":
        idx = np.asarray(idx)
        return replace(
            self,
            iterations=self.iterations[idx],
            a=self.a[idx],
            b=self.b[idx],
            m=self.m[idx],
            labels=self.labels[idx],
            theta=self.theta[idx],
            loglik=self.loglik[idx],
        )


# ---------------------------------------------------------------------------
# likelihoods


class CopulaLikelihood:
    """Per-observation copula log-densities for a fixed dataset."""

    def __init__(self, family, U):
        self.family = CopulaFamily.parse(family)
        self.U = np.ascontiguousarray(U, dtype=float)
        if self.U.ndim != 2 or self.U.shape[1] < 2:
            raise ValueError("data must be an n x p array with p >= 2")
        self.n, self.p = self.U.shape
        if self.p > 2 and self.p > impl(self.family).max_order(1.0):
            raise UnsupportedOrderError(f"{self.family.name} supports dimension at most {impl(self.family).max_order(1.0)}")

    def _eval(self, th, U):
        out = log_density(self.family, th, U)
        return np.where(np.isnan(out), -np.inf, out)

    def matrix(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        return self._eval(thetas[None, :], self.U[:, None, :])

    def column(self, theta):
        return self._eval(np.full(self.n, float(theta)), self.U)

    def pairs(self, thetas):
        return self._eval(thetas, self.U[:, None, :])

    def pointwise(self, theta_i):
        return self._eval(theta_i, self.U)

    def cluster_sums(self, theta_star, labels):
        vals = self.pointwise(theta_star[labels])
        return np.bincount(labels, weights=vals, minlength=theta_star.size)


class FlatLikelihood:
    """Constant likelihood; the sampler then targets the prior."""

    def __init__(self, n, p=2):
        self.n, self.p = n, p

    def matrix(self, thetas):
        return np.zeros((self.n, np.asarray(thetas).size))

    def column(self, theta):
        return np.zeros(self.n)

    def pairs(self, thetas):
        return np.zeros(np.shape(thetas))

    def pointwise(self, theta_i):
        return np.zeros(self.n)

    def cluster_sums(self, theta_star, labels):
        return np.zeros(np.asarray(theta_star).size)


# ---------------------------------------------------------------------------
# steps


def init_state(config: MCMCConfig, lik, rng) -> ChainState:
    """θ_i i.i.d. from g_0 (redrawn where u_i has zero density), (a, b) from the hyperprior."""
    n = lik.n
    theta = config.g0.sample(rng, n)
    for _ in range(1000):
        bad = ~np.isfinite(lik.pointwise(theta))
        if not bad.any():
            break
        theta[bad] = config.g0.sample(rng, int(bad.sum()))
    else:
        raise NumericalError("could not initialize parameters with finite densities")
    a, b = config.hp.sample(rng)
    return ChainState(
        labels=np.arange(n, dtype=np.int64),
        theta_star=theta.astype(float),
        a=float(a),
        b=float(b),
        kappa_theta=config.kappa_theta,
        kappa_a=config.kappa_a,
        kappa_b=config.kappa_b,
    )


def update_labels(state: ChainState, lik, g0: CenteringMeasure, r_aux: int, rng) -> ChainState:
    """Reallocate every observation among existing atoms and r_aux fresh g_0 draws."""
    n = lik.n
    cap = n + 1
    m = state.m
    labels = np.ascontiguousarray(state.labels, dtype=np.int64).copy()
    counts = np.zeros(cap, dtype=np.int64)
    counts[:m] = np.bincount(labels, minlength=m)
    theta = np.zeros(cap)
    theta[:m] = state.theta_star
    cache = np.zeros((n, cap))
    cache[:, :m] = lik.matrix(state.theta_star)
    aux_theta = np.ascontiguousarray(np.reshape(g0.sample(rng, (n, r_aux)), (n, r_aux)), dtype=float)
    aux_logf = np.ascontiguousarray(lik.pairs(aux_theta), dtype=float)
    uniforms = rng.uniform(size=n)

    def column_fn(value):
        return lik.column(value)

    kernels.sweep_labels(labels, counts, theta, cache, aux_theta, aux_logf, uniforms, state.a, state.b, column_fn)
    active = np.flatnonzero(counts > 0)
    remap = np.full(cap, -1, dtype=np.int64)
    remap[active] = np.arange(active.size)
    return replace(state, labels=remap[labels], theta_star=theta[active].copy())


def _interval(center, half_width, lo, hi):
    return np.maximum(lo, center - half_width), np.minimum(hi, center + half_width)


def refresh_unique(state: ChainState, lik, g0: CenteringMeasure, rng, kappa=None):
    """One truncated-uniform random-walk MH move per atom.

    Returns ``(state, n_accepted, n_proposed)``.  ``kappa`` may be a scalar or
    one step size per atom (defaults to ``state.kappa_theta``).
    """
    lo, hi = g0.family.bounds(getattr(lik, "p", 2))
    cur = state.theta_star
    k = state.kappa_theta if kappa is None else np.asarray(kappa, dtype=float)
    left, right = _interval(cur, k, lo, hi)
    prop = rng.uniform(left, right)
    left_back, right_back = _interval(prop, k, lo, hi)
    log_target_cur = g0.logpdf(cur) + lik.cluster_sums(cur, state.labels)
    log_target_prop = g0.logpdf(prop) + lik.cluster_sums(prop, state.labels)
    with np.errstate(invalid="ignore", divide="ignore"):
        log_ratio = (
            log_target_prop - log_target_cur + np.log(right - left) - np.log(right_back - left_back)
        )
    log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
    accept = np.log(rng.uniform(size=cur.size)) < log_ratio
    new = np.where(accept, prop, cur)
    return replace(state, theta_star=new), int(accept.sum()), int(cur.size)


def _log_eppf(counts, a, b):
    if not (0.0 <= a < 1.0) or not (b + a > 0.0):
        return -math.inf
    n, m = counts.sum(), counts.size
    out = gammaln(b + 1.0) - gammaln(b + n)
    out += np.sum(np.log(b + a * np.arange(1, m)))
    out += np.sum(gammaln(counts - a)) - m * gammaln(1.0 - a)
    return float(out)


def _log_hyper_target(counts, a, b, hp):
    lp = hyperprior_logdensity((a, b), hp)
    if not np.isfinite(lp):
        return -math.inf
    return _log_eppf(counts, a, b) + lp


def update_a(state: ChainState, hp: HyperPrior, rng):
    """MH for a | b, partition with a Un(max(0, a-κ_a), min(a+κ_a, 1)) proposal."""
    counts = state.counts.astype(float)
    left, right = max(0.0, state.a - state.kappa_a), min(state.a + state.kappa_a, 1.0)
    prop = rng.uniform(left, right)
    l_back, r_back = max(0.0, prop - state.kappa_a), min(prop + state.kappa_a, 1.0)
    log_ratio = (
        _log_hyper_target(counts, prop, state.b, hp)
        - _log_hyper_target(counts, state.a, state.b, hp)
        + math.log(right - left)
        - math.log(r_back - l_back)
    )
    accepted = bool(math.log(rng.uniform()) < log_ratio)
    return (replace(state, a=float(prop)) if accepted else state), accepted


def _log_gamma_rw(x, shape, centre):
    """log Ga(x | shape, rate = shape / centre)."""
    rate = shape / centre
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x


def update_b(state: ChainState, hp: HyperPrior, rng):
    """MH for b | a, partition with a gamma random walk on s = b + a.

    The proposal s' ~ Ga(κ_b, κ_b / s) has mean s and keeps the whole
    support b > -a reachable; the Hastings term uses the reverse gamma density.
    """
    counts = state.counts.astype(float)
    a, s = state.a, state.b + state.a
    kb = state.kappa_b
    s_prop = rng.gamma(kb, s / kb)
    if not s_prop > 0.0:
        rng.uniform()
        return state, False
    b_prop = s_prop - a
    log_ratio = (
        _log_hyper_target(counts, a, b_prop, hp)
        - _log_hyper_target(counts, a, state.b, hp)
        + _log_gamma_rw(s, kb, s_prop)
        - _log_gamma_rw(s_prop, kb, s)
    )
    accepted = bool(math.log(rng.uniform()) < log_ratio)
    return (replace(state, b=float(b_prop)) if accepted else state), accepted


def adapt_step_sizes(rates: dict, j: int, state: ChainState, mode=AdaptationMode.BOUNDED, band=(0.3, 0.4)):
    """Batch-wise step-size tuning after batch ``j`` (1-based).

    ``rates`` maps ``"theta"``, ``"a"``, ``"b"`` to batch acceptance rates
    (missing or NaN entries leave that step size alone).

    paper-literal: κ_θ *= 1.01^{±√j} (up when AR > 0.4), κ_a, κ_b *= e^{±√j}
    (up when AR < 0.3).  bounded: exponent δ_j = min(0.01, j^{-1/2}) on base e
    for every κ, κ_θ and κ_a widen when acceptance is too high, κ_b (a gamma
    shape, larger means smaller moves) grows when acceptance is too low, and
    every κ is clamped to [1e-4, 1e4].
    """
    mode = AdaptationMode(mode)
    low, high = band

    def direction(rate, widen_when_high):
        if rate is None or not np.isfinite(rate):
            return 0
        if rate > high:
            return 1 if widen_when_high else -1
        if rate < low:
            return -1 if widen_when_high else 1
        return 0

    if mode is AdaptationMode.PAPER:
        root = math.sqrt(j)
        kt = state.kappa_theta * 1.01 ** (direction(rates.get("theta"), True) * root)
        ka = state.kappa_a * math.exp(direction(rates.get("a"), False) * root)
        kb = state.kappa_b * math.exp(direction(rates.get("b"), False) * root)
        return replace(state, kappa_theta=kt, kappa_a=ka, kappa_b=kb)

    delta = min(0.01, j**-0.5)

    def clamp(x):
        return min(max(x, KAPPA_MIN), KAPPA_MAX)

    kt = clamp(state.kappa_theta * math.exp(direction(rates.get("theta"), True) * delta))
    ka = clamp(state.kappa_a * math.exp(direction(rates.get("a"), True) * delta))
    kb = clamp(state.kappa_b * math.exp(direction(rates.get("b"), False) * delta))
    return replace(state, kappa_theta=kt, kappa_a=ka, kappa_b=kb)


# ---------------------------------------------------------------------------
# driver


def run_chain(config: MCMCConfig, data, likelihood=None, callback=None) -> PosteriorDraws:
    """Run the sampler and return thinned post-burn-in draws.

    ``likelihood`` overrides the copula likelihood (e.g. :class:`FlatLikelihood`
    for prior checks).  Deterministic given ``config.seed``.
    """
    U = np.asarray(data, dtype=float)
    if U.ndim != 2:
        raise ValueError("data must be a 2-d array")
    n, p = U.shape
    if p > 2 and p > impl(config.family).max_order(1.0):
        raise UnsupportedOrderError(f"{config.family.name} does not support dimension {p}")
    if config.g0.p != p:
        raise ValueError(f"centering measure built for p={config.g0.p}, data has p={p}")
    lik = likelihood if likelihood is not None else CopulaLikelihood(config.family, U)
    rng = np.random.default_rng(config.seed)
    state = init_state(config, lik, rng)

    L = config.n_kept
    out_iter = np.zeros(L, dtype=np.int64)
    out_a = np.zeros(L)
    out_b = np.zeros(L)
    out_m = np.zeros(L, dtype=np.int64)
    out_labels = np.zeros((L, n), dtype=np.int64)
    out_theta = np.zeros((L, n))
    out_loglik = np.zeros((L, n))
    batches = []
    acc = {"theta": [0, 0], "a": [0, 0], "b": [0, 0]}
    kept = 0

    for t in range(1, config.n_iter + 1):
        state = update_labels(state, lik, config.g0, config.r_aux, rng)
        state, n_acc, n_prop = refresh_unique(state, lik, config.g0, rng)
        acc["theta"][0] += n_acc
        acc["theta"][1] += n_prop
        if config.update_hyper:
            state, ok = update_a(state, config.hp, rng)
            acc["a"][0] += ok
            acc["a"][1] += 1
            state, ok = update_b(state, config.hp, rng)
            acc["b"][0] += ok
            acc["b"][1] += 1
        state.iteration = t

        if t % config.batch_size == 0:
            j = t // config.batch_size
            rates = {k: (float(v[0] / v[1]) if v[1] else float("nan")) for k, v in acc.items()}
            batches.append(
                {
                    "batch": j,
                    "iteration": t,
                    "ar_theta": rates["theta"],
                    "ar_a": rates["a"],
                    "ar_b": rates["b"],
                    "kappa_theta": state.kappa_theta,
                    "kappa_a": state.kappa_a,
                    "kappa_b": state.kappa_b,
                }
            )
            if t <= config.burn_in:
                state = adapt_step_sizes(
                    rates, j, state, config.adaptation, (config.target_low, config.target_high)
                )
            acc = {k: [0, 0] for k in acc}

        if t > config.burn_in and (t - config.burn_in) % config.thin == 0 and kept < L:
            theta_i = state.theta
            ll = lik.pointwise(theta_i)
            bad = np.flatnonzero(~np.isfinite(ll))
            if bad.size:
                i = int(bad[0])
                raise NumericalError(
                    f"non-finite log-density at iteration {t}: observation {i}, theta={theta_i[i]!r}"
                )
            out_iter[kept] = t
            out_a[kept] = state.a
            out_b[kept] = state.b
            out_m[kept] = state.m
            out_labels[kept] = _canonical(state.labels)
            out_theta[kept] = theta_i
            out_loglik[kept] = ll
            kept += 1
        if callback is not None:
            callback(t, state)

    return PosteriorDraws(
        family=config.family,
        iterations=out_iter,
        a=out_a,
        b=out_b,
        m=out_m,
        labels=out_labels,
        theta=out_theta,
        loglik=out_loglik,
        batches=batches,
    )


def _canonical(labels):
    """Relabel clusters by order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)

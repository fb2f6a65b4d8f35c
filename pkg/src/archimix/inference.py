"""Posterior summaries computed from :class:`~archimix.sampler.PosteriorDraws`."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .copulas import CopulaFamily, log_density, tau_of
from .prior import CenteringMeasure
from .sampler import KAPPA_MAX, KAPPA_MIN, ChainState, CopulaLikelihood, MCMCConfig, PosteriorDraws, refresh_unique

__all__ = [
    "Partition",
    "ClusterSummary",
    "DensityGrid",
    "lpml",
    "posterior_tau",
    "coclustering_matrix",
    "binder_loss",
    "select_partition",
    "post_mcmc_refit",
    "density_grid",
    "modal_m",
]


@dataclass(frozen=True)
class Partition:
    """Cluster labels 0..m-1, numbered by first appearance."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        _, first, inverse = np.unique(lab, return_index=True, return_inverse=True)
        canon = np.argsort(np.argsort(first))[inverse]
        object.__setattr__(self, "labels", canon.astype(np.int64))

    @property
    def m(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.m)


@dataclass(frozen=True)
class ClusterSummary:
    cluster: int
    size: int
    mean: float
    lower: float
    upper: float
    weight: float


@dataclass(frozen=True)
class DensityGrid:
    G: int
    pair: tuple
    family: CopulaFamily
    values: np.ndarray

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.G) + 0.5) / self.G

    def riemann_sum(self) -> float:
        return float(self.values.sum() / self.G**2)


def lpml(draws: PosteriorDraws):
    """Log pseudo-marginal likelihood and per-observation CPO.

    CPO_i is the harmonic mean over kept draws of f_C(u_i | θ_i^(l)), formed
    as a log-sum-exp of negated log-densities.
    """
    ll = np.asarray(draws.loglik if isinstance(draws, PosteriorDraws) else draws, dtype=float)
    if ll.ndim != 2 or ll.shape[0] == 0:
        raise ValueError("need an L x n array of log-densities with L >= 1")
    L = ll.shape[0]
    lse = logsumexp(-ll, axis=0)
    share = np.exp(np.max(-ll, axis=0) - lse)
    if L > 1 and np.any(share > 0.99):
        worst = int(np.argmax(share))
        warnings.warn(
            f"one draw carries {share[worst]:.3f} of the harmonic mean for observation {worst}; CPO is unstable",
            RuntimeWarning,
            stacklevel=2,
        )
    log_cpo = math.log(L) - lse
    return float(log_cpo.sum()), np.exp(log_cpo)


def _predictive_weights(counts, a, b):
    n = counts.sum()
    m = counts.size
    return (counts - a) / (b + n), (b + a * m) / (b + n)


def posterior_tau(draws: PosteriorDraws, g0: CenteringMeasure, rng, level: float = 0.95):
    """Kendall's tau from one predictive draw θ_0 per kept iteration.

    θ_0 is θ*_j with probability (n_j - a)/(b + n) and a fresh g_0 draw with
    probability (b + a m)/(b + n).  Returns ``(mean, (lo, hi), samples)`` with
    equal-tailed empirical quantiles.
    """
    L = draws.n_kept
    if L == 0:
        raise ValueError("no kept draws")
    theta0 = np.empty(L)
    u = rng.uniform(size=L)
    fresh = g0.sample(rng, L)
    for l in range(L):
        atoms, counts = draws.atoms(l)
        w_atoms, w_new = _predictive_weights(counts, draws.a[l], draws.b[l])
        cum = np.cumsum(np.append(w_atoms, w_new))
        k = min(int(np.searchsorted(cum, u[l] * cum[-1], side="right")), cum.size - 1)
        theta0[l] = atoms[k] if k < atoms.size else fresh[l]
    samples = np.asarray(tau_of(draws.family, theta0), dtype=float)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [alpha, 1.0 - alpha])
    return float(samples.mean()), (float(lo), float(hi)), samples


def modal_m(draws: PosteriorDraws) -> int:
    """Most frequent number of clusters among kept draws (smallest on ties)."""
    return int(np.argmax(np.bincount(draws.m)))


def coclustering_matrix(draws) -> np.ndarray:
    """Posterior similarity matrix: fraction of draws with label(i) == label(k)."""
    labels = draws.labels if isinstance(draws, PosteriorDraws) else np.atleast_2d(draws)
    L, n = labels.shape
    if L == 0:
        raise ValueError("no kept draws")
    psm = np.zeros((n, n))
    for lab in labels:
        onehot = np.zeros((n, int(lab.max()) + 1))
        onehot[np.arange(n), lab] = 1.0
        psm += onehot @ onehot.T
    return psm / L


def binder_loss(labels, psm) -> float:
    """Σ_{i<k} |1{c_i = c_k} - p_ik|."""
    lab = np.asarray(labels)
    same = (lab[:, None] == lab[None, :]).astype(float)
    iu = np.triu_indices(lab.size, 1)
    return float(np.abs(same - psm)[iu].sum())


def select_partition(psm, n_candidates: int = 16, rng=None) -> Partition:
    """Greedy Binder-loss minimization over ``n_candidates`` random item orders.

    Each candidate starts from sequential allocation in a random order, then
    reallocates items one at a time until no move lowers the loss.  The first
    best-scoring candidate is returned (the identity order is always tried).
    """
    psm = np.ascontiguousarray(psm, dtype=float)
    n = psm.shape[0]
    if psm.shape != (n, n):
        raise ValueError("psm must be square")
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    best_labels, best_loss = None, math.inf
    for c in range(n_candidates):
        order = np.arange(n, dtype=np.int64) if c == 0 else rng.permutation(n).astype(np.int64)
        labels = np.empty(n, dtype=np.int64)
        kernels.binder_allocate(psm, order, labels)
        loss = binder_loss(labels, psm)
        if loss < best_loss - 1e-12:
            best_labels, best_loss = labels.copy(), loss
    return Partition(best_labels)


def post_mcmc_refit(
    partition: Partition,
    data,
    config: MCMCConfig,
    draws: PosteriorDraws,
    rng,
    n_iter: int = 2000,
    burn_in: int = 500,
    level: float = 0.95,
) -> list[ClusterSummary]:
    """Re-sample the cluster parameters with the partition held fixed.

    Runs the truncated-uniform MH refresh alone.  Each cluster gets its own
    step size, started from the spread of its members' θ_i across kept draws
    and tuned toward the acceptance band during the refit burn-in.
    """
    U = np.asarray(data, dtype=float)
    labels = np.asarray(partition.labels, dtype=np.int64)
    if labels.size != U.shape[0]:
        raise ValueError("partition size differs from the number of observations")
    if not (0 <= burn_in < n_iter):
        raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
    m = partition.m
    lik = CopulaLikelihood(config.family, U)
    members = [labels == j for j in range(m)]
    start = np.array([np.median(draws.theta[:, mem]) for mem in members])
    spread = np.array([np.std(draws.theta[:, mem]) for mem in members])
    kappa = np.clip(np.where(spread > 0, 2.0 * spread, config.kappa_theta), KAPPA_MIN, KAPPA_MAX)
    state = ChainState(labels=labels, theta_star=start, a=0.0, b=1.0)
    kept = np.empty((n_iter - burn_in, m))
    acc = np.zeros(m)
    low, high = config.target_low, config.target_high
    for t in range(1, n_iter + 1):
        old = state.theta_star
        state, _, _ = refresh_unique(state, lik, config.g0, rng, kappa=kappa)
        acc += state.theta_star != old
        if t <= burn_in and t % config.batch_size == 0:
            j = t // config.batch_size
            rate = acc / config.batch_size
            step = j**-0.5
            kappa = np.where(rate > high, kappa * math.exp(step), np.where(rate < low, kappa * math.exp(-step), kappa))
            kappa = np.clip(kappa, KAPPA_MIN, KAPPA_MAX)
        if t % config.batch_size == 0:
            acc[:] = 0
        if t > burn_in:
            kept[t - burn_in - 1] = state.theta_star
    sizes = partition.sizes
    n = labels.size
    alpha = (1.0 - level) / 2.0
    out = []
    for j in range(m):
        w = np.mean((sizes[j] - draws.a) / (draws.b + n))
        lo, hi = np.quantile(kept[:, j], [alpha, 1.0 - alpha])
        out.append(ClusterSummary(j, int(sizes[j]), float(kept[:, j].mean()), float(lo), float(hi), float(w)))
    return out


def density_grid(
    draws: PosteriorDraws,
    g0: CenteringMeasure,
    G: int,
    pair=(0, 1),
    rng=None,
    pool_size: int = 200,
    max_draws: int = 200,
) -> DensityGrid:
    """Posterior predictive bivariate density at the G x G grid midpoints.

    Every Archimedean pair margin is the bivariate copula with the same θ, so
    ``pair`` only labels the output.  The new-cluster term uses a fixed pool of
    ``pool_size`` g_0 draws; at most ``max_draws`` evenly spaced kept draws
    enter the average.
    """
    if G < 2:
        raise ValueError("G must be >= 2")
    rng = np.random.default_rng() if rng is None else rng
    fam = draws.family
    mid = (np.arange(G) + 0.5) / G
    U = np.stack(np.meshgrid(mid, mid, indexing="ij"), axis=-1).reshape(-1, 2)
    pool = g0.sample(rng, pool_size)
    new_density = np.zeros(U.shape[0])
    for th in pool:
        new_density += np.exp(log_density(fam, th, U))
    new_density /= pool_size
    L = draws.n_kept
    if L == 0:
        raise ValueError("no kept draws")
    idx = np.unique(np.linspace(0, L - 1, min(L, max_draws)).round().astype(int))
    acc = np.zeros(U.shape[0])
    for l in idx:
        atoms, counts = draws.atoms(l)
        w_atoms, w_new = _predictive_weights(counts, draws.a[l], draws.b[l])
        acc += w_new * new_density
        for th, w in zip(atoms, w_atoms):
            acc += w * np.exp(log_density(fam, th, U))
    values = np.nan_to_num(acc / idx.size, nan=0.0, posinf=0.0).reshape(G, G)
    return DensityGrid(G=G, pair=tuple(int(x) for x in pair), family=fam, values=np.maximum(values, 0.0))

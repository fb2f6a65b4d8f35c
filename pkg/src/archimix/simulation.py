"""Synthetic data: Archimedean mixtures, Gaussian copulas and a Gaussian benchmark fit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .copulas import BOUNDARY_EPS, CopulaFamily, Theta, sample_copula
from .inference import lpml
from .prior import mixture_tau

__all__ = [
    "MixtureSpec",
    "GaussianSpec",
    "PRESETS",
    "sample_mixture",
    "gaussian_copula_sample",
    "gaussian_copula_logdensity",
    "gaussian_tau",
    "sample_gaussian_mixture",
    "GaussianFit",
    "gaussian_benchmark_fit",
    "simulate_preset",
]


@dataclass(frozen=True)
class MixtureSpec:
    """Finite mixture Σ π_k C(·|ϑ_k) of one Archimedean family."""

    family: CopulaFamily
    weights: tuple
    thetas: tuple
    p: int = 2
    n: int = 500

    def __post_init__(self):
        fam = CopulaFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        w = tuple(float(x) for x in self.weights)
        th = tuple(t if isinstance(t, Theta) else Theta(fam, float(t)) for t in self.thetas)
        if len(w) != len(th) or not w:
            raise ValueError("need one weight per component")
        if any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if any(t.family is not fam for t in th):
            raise ValueError("all components must share the mixture family")
        if self.n < 1 or self.p < 2:
            raise ValueError("need n >= 1 and p >= 2")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thetas", th)

    @property
    def tau(self) -> float:
        return mixture_tau(self.weights, self.thetas)


@dataclass(frozen=True)
class GaussianSpec:
    """Finite mixture of bivariate Gaussian copulas."""

    weights: tuple
    rhos: tuple
    n: int = 500
    p: int = 2

    def __post_init__(self):
        if len(self.weights) != len(self.rhos) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("need one positive weight per correlation, summing to 1")
        if any(not -1.0 < r < 1.0 for r in self.rhos):
            raise ValueError("correlations must lie in (-1, 1)")

    @property
    def tau(self) -> float:
        return float(sum(w * gaussian_tau(r) for w, r in zip(self.weights, self.rhos)))


def _components(weights, n, rng):
    return rng.choice(len(weights), size=n, p=np.asarray(weights))


def sample_mixture(spec: MixtureSpec, rng) -> np.ndarray:
    """n x p draws: component index from π, then a copula draw."""
    comp = _components(spec.weights, spec.n, rng)
    out = np.empty((spec.n, spec.p))
    for k, theta in enumerate(spec.thetas):
        idx = np.flatnonzero(comp == k)
        if idx.size:
            out[idx] = sample_copula(theta, spec.p, idx.size, rng)
    return out


def gaussian_tau(rho):
    return 2.0 / math.pi * np.arcsin(rho)


def gaussian_copula_sample(rho: float, n: int, rng) -> np.ndarray:
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    return np.clip(ndtr(np.column_stack([z1, z2])), BOUNDARY_EPS, 1.0 - BOUNDARY_EPS)


def gaussian_copula_logdensity(rho, u):
    """log c(u1, u2 | ρ); ``rho`` broadcasts against the leading axes of ``u``."""
    u = np.asarray(u, dtype=float)
    rho = np.asarray(rho, dtype=float)
    x = ndtri(u[..., 0])
    y = ndtri(u[..., 1])
    one_m = 1.0 - rho * rho
    return -0.5 * np.log(one_m) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_m)


def sample_gaussian_mixture(spec: GaussianSpec, rng) -> np.ndarray:
    comp = _components(spec.weights, spec.n, rng)
    out = np.empty((spec.n, 2))
    for k, rho in enumerate(spec.rhos):
        idx = np.flatnonzero(comp == k)
        if idx.size:
            out[idx] = gaussian_copula_sample(rho, idx.size, rng)
    return out


@dataclass
class GaussianFit:
    rho: np.ndarray
    tau_hat: float
    ci: tuple
    lpml: float
    acceptance: float


def gaussian_benchmark_fit(
    data, n_iter: int = 3000, rng=None, burn_in: int | None = None, thin: int = 1, kappa: float = 0.1
) -> GaussianFit:
    """Single Gaussian copula, ρ ~ Un(-1, 1), truncated-uniform random-walk MH.

    The step size is tuned toward acceptance in [0.3, 0.4] in batches of 50
    during burn-in (default: first third of the run).
    """
    U = np.asarray(data, dtype=float)
    if U.ndim != 2 or U.shape[1] != 2:
        raise ValueError("the Gaussian benchmark is bivariate")
    rng = np.random.default_rng() if rng is None else rng
    burn_in = n_iter // 3 if burn_in is None else burn_in
    if not (0 <= burn_in < n_iter):
        raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
    x, y = ndtri(U[:, 0]), ndtri(U[:, 1])

    def pointwise(rho):
        om = 1.0 - rho * rho
        return -0.5 * math.log(om) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * om)

    rho = 0.0
    ll = pointwise(rho)
    cur = ll.sum()
    kept_rho, kept_ll = [], []
    batch_acc, total_acc, n_post = 0, 0, 0
    for t in range(1, n_iter + 1):
        left, right = max(-1.0, rho - kappa), min(1.0, rho + kappa)
        prop = rng.uniform(left, right)
        lb, rb = max(-1.0, prop - kappa), min(1.0, prop + kappa)
        accept_u = rng.uniform()
        if -1.0 < prop < 1.0:
            ll_prop = pointwise(prop)
            new = ll_prop.sum()
            if math.log(accept_u) < new - cur + math.log(right - left) - math.log(rb - lb):
                rho, ll, cur = prop, ll_prop, new
                batch_acc += 1
                total_acc += t > burn_in
        if t <= burn_in and t % 50 == 0:
            rate = batch_acc / 50
            step = (t // 50) ** -0.5
            if rate > 0.4:
                kappa = min(kappa * math.exp(step), 2.0)
            elif rate < 0.3:
                kappa = max(kappa * math.exp(-step), 1e-4)
        if t % 50 == 0:
            batch_acc = 0
        if t > burn_in:
            n_post += 1
            if (t - burn_in) % thin == 0:
                kept_rho.append(rho)
                kept_ll.append(ll)
    rhos = np.array(kept_rho)
    taus = gaussian_tau(rhos)
    lo, hi = np.quantile(taus, [0.025, 0.975])
    return GaussianFit(
        rho=rhos,
        tau_hat=float(taus.mean()),
        ci=(float(lo), float(hi)),
        lpml=lpml(np.array(kept_ll))[0],
        acceptance=total_acc / max(n_post, 1),
    )


def _sim1(fam, thetas, n):
    return MixtureSpec(fam, (0.5, 0.5), thetas, 2, n)


PRESETS: dict = {}
for _fam, _th in [
    (CopulaFamily.AMH, (-0.8, 0.8)),
    (CopulaFamily.CLA, (-0.5, 10.0)),
    (CopulaFamily.FRA, (-5.0, 5.0)),
    (CopulaFamily.GUM, (5.0, 10.0)),
    (CopulaFamily.JOE, (2.0, 10.0)),
]:
    for _n in (200, 500):
        PRESETS[f"sim1-{_fam.value}-{_n}"] = _sim1(_fam, _th, _n)
PRESETS["sim2-gauss"] = GaussianSpec((1.0,), (0.7,), 500)
PRESETS["sim2-gaussmix"] = GaussianSpec((0.5, 0.5), (-0.7, 0.7), 500)
for _name, _th in [("s1", (1.0, 5.0, 15.0)), ("s2", (2.0, 5.0, 10.0)), ("s3", (2.0, 7.0, 15.0))]:
    PRESETS[f"sim3-{_name}"] = MixtureSpec(CopulaFamily.CLA, (0.2, 0.3, 0.5), _th, 4, 1000)


def simulate_preset(name: str, rng) -> np.ndarray:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if isinstance(spec, GaussianSpec):
        return sample_gaussian_mixture(spec, rng)
    return sample_mixture(spec, rng)

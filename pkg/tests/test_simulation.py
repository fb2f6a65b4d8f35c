import math

import numpy as np
import pytest
from scipy import stats

from archimix.copulas import CopulaFamily, Theta, copula_cdf, empirical_kendall_tau, sample_copula
from archimix.simulation import (
    PRESETS,
    GaussianSpec,
    MixtureSpec,
    gaussian_benchmark_fit,
    gaussian_copula_logdensity,
    gaussian_copula_sample,
    gaussian_tau,
    sample_gaussian_mixture,
    sample_mixture,
    simulate_preset,
)

from .conftest import graded_gauss_legendre


def batched_tau(U, batches=20):
    """Empirical τ and its standard error from independent batches."""
    parts = np.array_split(U, batches)
    taus = np.array([empirical_kendall_tau(p[:, 0], p[:, 1]) for p in parts])
    return taus.mean(), taus.std(ddof=1) / math.sqrt(batches)


def concordance_tau(spec, rng, N=200000):
    """Population τ of a mixture, 4 Σ_jk π_j π_k E_{U~C_j}[C_k(U)] - 1, with its MC error.

    This differs from the weighted average Σ π_k τ_k reported by mixture_tau.
    """
    total, var = 0.0, 0.0
    for wj, tj in zip(spec.weights, spec.thetas):
        U = sample_copula(tj, 2, N, rng)
        vals = sum(wk * copula_cdf(tk, U) for wk, tk in zip(spec.weights, spec.thetas))
        total += wj * vals.mean()
        var += wj**2 * vals.var(ddof=1) / N
    return 4.0 * total - 1.0, 4.0 * math.sqrt(var)


@pytest.mark.parametrize(
    "family,thetas,weighted",
    [("cla", (-0.5, 10.0), 0.25), ("joe", (2.0, 10.0), 0.59)],
)
def test_mixture_empirical_tau_examples(family, thetas, weighted, rng):
    spec = MixtureSpec(family, (0.5, 0.5), thetas, n=10**5)
    assert spec.tau == pytest.approx(weighted, abs=5e-3)
    tau, se = batched_tau(sample_mixture(spec, rng))
    exact, se_exact = concordance_tau(spec, rng)
    assert abs(tau - exact) <= 3 * math.hypot(se, se_exact)
    # the cross terms pull the population τ below the weighted average
    assert exact < spec.tau - 0.02


@pytest.mark.parametrize("name", sorted(k for k in PRESETS if k.startswith("sim1") and k.endswith("500")))
def test_presets_match_population_tau(name, rng):
    spec = PRESETS[name]
    big = MixtureSpec(spec.family, spec.weights, spec.thetas, spec.p, 20000)
    tau, se = batched_tau(sample_mixture(big, rng))
    exact, se_exact = concordance_tau(spec, rng)
    assert abs(tau - exact) <= 3 * math.hypot(se, se_exact)


def test_clustered_presets_pairwise_tau(rng):
    spec = PRESETS["sim3-s2"]
    big = MixtureSpec(spec.family, spec.weights, spec.thetas, spec.p, 20000)
    U = sample_mixture(big, rng)
    assert U.shape == (20000, 4)
    # every bivariate margin is the bivariate mixture with the same weights and parameters
    pair_spec = MixtureSpec(spec.family, spec.weights, [t.value for t in spec.thetas], 2, 20000)
    exact, se_exact = concordance_tau(pair_spec, rng)
    for i, j in [(0, 1), (1, 3)]:
        tau, se = batched_tau(U[:, [i, j]])
        assert abs(tau - exact) <= 3 * math.hypot(se, se_exact)


def test_single_component_mixture_matches_copula():
    rng = np.random.default_rng(5)
    theta = Theta(CopulaFamily.GUM, 3.0)
    mix = sample_mixture(MixtureSpec("gum", (1.0,), (theta,), n=4000), rng)
    direct = sample_copula(theta, 2, 4000, rng)
    for stat in (lambda U: U[:, 0], lambda U: U[:, 1], lambda U: np.maximum(U[:, 0], U[:, 1])):
        assert stats.ks_2samp(stat(mix), stat(direct)).pvalue > 1e-3


def test_mixture_spec_validation():
    with pytest.raises(ValueError):
        MixtureSpec("cla", (0.5, 0.4), (1.0, 2.0))
    with pytest.raises(ValueError):
        MixtureSpec("cla", (1.0,), (1.0, 2.0))
    with pytest.raises(ValueError):
        MixtureSpec("cla", (1.0,), (Theta(CopulaFamily.GUM, 2.0),))
    with pytest.raises(ValueError):
        GaussianSpec((1.0,), (1.0,))


# -- Gaussian copula -------------------------------------------------------------------


def test_gaussian_tau_examples():
    assert gaussian_tau(0.7) == pytest.approx(0.4936, abs=1e-4)
    assert gaussian_tau(0.0) == 0.0
    assert GaussianSpec((0.5, 0.5), (-0.7, 0.7)).tau == pytest.approx(0.0, abs=1e-15)


def test_gaussian_independence_density(rng):
    u = rng.uniform(size=(100, 2))
    np.testing.assert_allclose(gaussian_copula_logdensity(0.0, u), 0.0, atol=1e-15)


@pytest.mark.parametrize("rho", [-0.7, 0.0, 0.7])
def test_gaussian_density_integrates_to_one(rho):
    x, w = graded_gauss_legendre(levels=20, k=10)
    U = np.stack(np.meshgrid(x, x, indexing="ij"), axis=-1)
    mass = float((np.exp(gaussian_copula_logdensity(rho, U)) * np.outer(w, w)).sum())
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_gaussian_density_formula():
    u = np.array([0.2, 0.9])
    x, y = stats.norm.ppf(u)
    rho = 0.4
    joint = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).logpdf([x, y])
    expected = joint - stats.norm.logpdf(x) - stats.norm.logpdf(y)
    assert gaussian_copula_logdensity(rho, u) == pytest.approx(expected, rel=1e-12)


def test_gaussian_sample_tau(rng):
    U = gaussian_copula_sample(0.7, 20000, rng)
    tau, se = batched_tau(U)
    assert abs(tau - gaussian_tau(0.7)) <= 3 * se
    mix = sample_gaussian_mixture(GaussianSpec((0.5, 0.5), (-0.7, 0.7), 20000), rng)
    tau, se = batched_tau(mix)
    assert abs(tau) <= 3 * se


def test_benchmark_on_independence(rng):
    U = rng.uniform(size=(400, 2))
    fit = gaussian_benchmark_fit(U, n_iter=1500, rng=rng)
    assert abs(fit.rho.mean()) < 0.1
    assert fit.ci[0] < 0.0 < fit.ci[1]
    assert 0.15 < fit.acceptance < 0.6
    assert np.isfinite(fit.lpml)


def test_benchmark_rejects_higher_dimensions(rng):
    with pytest.raises(ValueError):
        gaussian_benchmark_fit(rng.uniform(size=(10, 3)), n_iter=10, rng=rng)


# -- presets ---------------------------------------------------------------------------------


def test_preset_catalogue(rng):
    expected = {f"sim1-{f}-{n}" for f in ("amh", "cla", "fra", "gum", "joe") for n in (200, 500)}
    expected |= {"sim2-gauss", "sim2-gaussmix", "sim3-s1", "sim3-s2", "sim3-s3"}
    assert set(PRESETS) == expected
    assert simulate_preset("sim1-gum-200", rng).shape == (200, 2)
    assert simulate_preset("sim3-s1", rng).shape == (1000, 4)
    U = simulate_preset("sim2-gauss", rng)
    assert U.shape == (500, 2) and U.min() > 0 and U.max() < 1
    with pytest.raises(KeyError):
        simulate_preset("sim9", rng)

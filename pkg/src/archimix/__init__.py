"""Bayesian nonparametric mixtures of Archimedean copulas."""

from .copulas import CopulaFamily, Theta, copula_cdf, kendall_tau, log_density, sample_copula
from .inference import density_grid, lpml, post_mcmc_refit, posterior_tau, select_partition
from .prior import CenteringMeasure, HyperPrior, PDHyper, eppf_log
from .sampler import MCMCConfig, PosteriorDraws, run_chain
from .simulation import MixtureSpec, sample_mixture, simulate_preset

__version__ = "0.1.0"

__all__ = [
    "CenteringMeasure",
    "CopulaFamily",
    "HyperPrior",
    "MCMCConfig",
    "MixtureSpec",
    "PDHyper",
    "PosteriorDraws",
    "Theta",
    "copula_cdf",
    "density_grid",
    "eppf_log",
    "kendall_tau",
    "log_density",
    "lpml",
    "post_mcmc_refit",
    "posterior_tau",
    "run_chain",
    "sample_copula",
    "sample_mixture",
    "select_partition",
    "simulate_preset",
]

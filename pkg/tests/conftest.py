import mpmath as mp
import numpy as np
import pytest

from archimix.copulas import log_density

# three representative parameters per family (Joe kept at θ >= 1, a proper copula)
FAMILY_THETAS = {
    "amh": (-0.8, 0.3, 0.8),
    "cla": (-0.5, 2.0, 10.0),
    "fra": (-5.0, 1.0, 5.0),
    "gum": (1.5, 5.0, 10.0),
    "joe": (1.5, 2.0, 10.0),
}


def mp_generator(family, th, t):
    """Generators written independently in arbitrary precision."""
    th, t = mp.mpf(th), mp.mpf(t)
    if family == "amh":
        return mp.log((1 - th * (1 - t)) / t)
    if family == "cla":
        return t ** (-th) - 1
    if family == "fra":
        return -mp.log((mp.exp(-th * t) - 1) / (mp.exp(-th) - 1))
    if family == "gum":
        return (-mp.log(t)) ** th
    return -mp.log(1 - (1 - t) ** th)


def set_partitions(n):
    """All set partitions of n items as restricted-growth label lists."""
    if n == 0:
        yield []
        return
    for head in set_partitions(n - 1):
        m = max(head) + 1 if head else 0
        for k in range(m + 1):
            yield head + [k]


def graded_gauss_legendre(levels=14, k=8):
    """Composite Gauss-Legendre on [0, 1] with panels halving toward both ends."""
    e = [0.5**j for j in range(levels, 0, -1)]
    edges = np.array([0.0] + e + [1.0 - x for x in reversed(e[:-1])] + [1.0])
    x, w = np.polynomial.legendre.leggauss(k)
    a, b = edges[:-1, None], edges[1:, None]
    return ((b - a) / 2 * x + (a + b) / 2).ravel(), ((b - a) / 2 * w).ravel()


def density_mass(family, theta, levels=14, k=8):
    """∫∫ c(u1, u2) over the copula support by product Gauss-Legendre.

    The inner rule runs over [lo(u1), 1], where lo is the lower edge of the
    support (non-zero only for Clayton θ < 0).
    """
    x, w = graded_gauss_legendre(levels, k)
    lo = np.zeros_like(x)
    if family == "cla" and theta < 0:
        q = -theta
        lo = (1.0 - x**q) ** (1.0 / q)
    inner = lo[:, None] + (1.0 - lo[:, None]) * x[None, :]
    weights = w[:, None] * (1.0 - lo[:, None]) * w[None, :]
    U = np.stack([np.broadcast_to(x[:, None], inner.shape), inner], axis=-1).reshape(-1, 2)
    U = np.clip(U, 1e-12, 1 - 1e-12)
    dens = np.exp(log_density(family, theta, U)).reshape(inner.shape)
    return float((dens * weights).sum()), x.size**2


def exhaustive_binder(psm):
    from archimix.inference import binder_loss

    n = psm.shape[0]
    best, best_loss = None, np.inf
    for labels in set_partitions(n):
        loss = binder_loss(np.array(labels), psm)
        if loss < best_loss - 1e-12:
            best, best_loss = labels, loss
    return np.array(best), best_loss


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import numpy as np
import pytest

from archimix import kernels
from archimix.copulas import CopulaFamily
from archimix.prior import CenteringMeasure
from archimix.sampler import CopulaLikelihood, MCMCConfig, run_chain
from archimix.simulation import PRESETS, simulate_preset

BACKENDS = kernels.backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _sweep_inputs(seed, n=40, r=3):
    rng = np.random.default_rng(seed)
    U = simulate_preset("sim1-cla-200", rng)[:n]
    lik = CopulaLikelihood("cla", U)
    g0 = CenteringMeasure(CopulaFamily.CLA)
    m = 5
    labels = rng.integers(0, m, size=n).astype(np.int64)
    labels[:m] = np.arange(m)
    cap = n + 1
    counts = np.zeros(cap, dtype=np.int64)
    counts[:m] = np.bincount(labels, minlength=m)
    theta = np.zeros(cap)
    theta[:m] = g0.sample(rng, m)
    cache = np.zeros((n, cap))
    cache[:, :m] = lik.matrix(theta[:m])
    aux = g0.sample(rng, (n, r))
    return dict(
        labels=labels,
        counts=counts,
        theta=theta,
        cache=cache,
        aux_theta=np.ascontiguousarray(aux),
        aux_logf=np.ascontiguousarray(lik.pairs(aux)),
        uniforms=rng.uniform(size=n),
        a=0.3,
        b=1.2,
        column_fn=lik.column,
    )


def test_backend_selection():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


@needs_cython
@pytest.mark.parametrize("seed", range(5))
def test_sweep_labels_backends_agree(seed):
    results = {}
    for name, mod in BACKENDS.items():
        args = _sweep_inputs(seed)
        mod.sweep_labels(**args)
        results[name] = args
    py, cy = results["python"], results["cython"]
    np.testing.assert_array_equal(py["labels"], cy["labels"])
    np.testing.assert_array_equal(py["counts"], cy["counts"])
    active = py["counts"] > 0
    np.testing.assert_array_equal(py["theta"][active], cy["theta"][active])


def test_sweep_keeps_counts_consistent():
    args = _sweep_inputs(11)
    BACKENDS["python"].sweep_labels(**args)
    np.testing.assert_array_equal(np.bincount(args["labels"], minlength=args["counts"].size), args["counts"])
    assert args["counts"].sum() == args["labels"].size


def _random_psm(rng, n):
    draws = rng.integers(0, 3, size=(30, n))
    return (draws[:, :, None] == draws[:, None, :]).mean(axis=0)


@needs_cython
@pytest.mark.parametrize("seed", range(10))
def test_binder_allocate_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 25))
    psm = _random_psm(rng, n)
    order = rng.permutation(n).astype(np.int64)
    out = {}
    for name, mod in BACKENDS.items():
        labels = np.zeros(n, dtype=np.int64)
        mod.binder_allocate(psm, order, labels)
        out[name] = labels
    np.testing.assert_array_equal(out["python"], out["cython"])


@needs_cython
def test_full_chain_backends_identical(monkeypatch):
    U = simulate_preset("sim1-cla-200", np.random.default_rng(3))[:60]
    cfg = MCMCConfig("cla", n_iter=120, burn_in=60, thin=2, seed=5)
    draws = {}
    for name, mod in BACKENDS.items():
        monkeypatch.setattr(kernels, "sweep_labels", mod.sweep_labels)
        draws[name] = run_chain(cfg, U)
    py, cy = draws["python"], draws["cython"]
    np.testing.assert_array_equal(py.labels, cy.labels)
    np.testing.assert_array_equal(py.theta, cy.theta)
    np.testing.assert_array_equal(py.a, cy.a)
    np.testing.assert_array_equal(py.b, cy.b)


def test_presets_are_registered():
    assert "sim1-cla-200" in PRESETS

"""Compare the compiled and pure-Python hot loops.

Times the label-reallocation sweep and the Binder allocation on identical
inputs for every available backend, checks that they agree, and times a
short full chain under each backend.

    python benchmarks/bench_kernels.py [--n 200] [--repeat 5]
"""

import argparse
import time

import numpy as np

from archimix import kernels
from archimix.copulas import CopulaFamily
from archimix.prior import CenteringMeasure
from archimix.sampler import CopulaLikelihood, MCMCConfig, run_chain
from archimix.simulation import MixtureSpec, sample_mixture


def sweep_inputs(U, seed, m=8, r=3):
    rng = np.random.default_rng(seed)
    n = U.shape[0]
    lik = CopulaLikelihood("cla", U)
    g0 = CenteringMeasure(CopulaFamily.CLA)
    labels = rng.integers(0, m, size=n).astype(np.int64)
    labels[:m] = np.arange(m)
    counts = np.zeros(n + 1, dtype=np.int64)
    counts[:m] = np.bincount(labels, minlength=m)
    theta = np.zeros(n + 1)
    theta[:m] = g0.sample(rng, m)
    cache = np.zeros((n, n + 1))
    cache[:, :m] = lik.matrix(theta[:m])
    aux = np.ascontiguousarray(g0.sample(rng, (n, r)))
    return dict(
        labels=labels,
        counts=counts,
        theta=theta,
        cache=cache,
        aux_theta=aux,
        aux_logf=np.ascontiguousarray(lik.pairs(aux)),
        uniforms=rng.uniform(size=n),
        a=0.2,
        b=1.0,
        column_fn=lik.column,
    )


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--iters", type=int, default=300)
    args = parser.parse_args()

    U = sample_mixture(MixtureSpec("cla", (0.5, 0.5), (-0.5, 10.0), n=args.n), np.random.default_rng(0))
    backends = kernels.backends()
    print(f"backends: {', '.join(backends)}   (n = {args.n}, best of {args.repeat})")

    labels_out, binder_out, chains = {}, {}, {}
    for name, mod in backends.items():

        def sweep():
            inp = sweep_inputs(U, seed=1)
            mod.sweep_labels(**inp)
            return inp["labels"].copy()

        t_sweep, labels_out[name] = best_of(sweep, args.repeat)

        rng = np.random.default_rng(2)
        draws = rng.integers(0, 4, size=(100, args.n))
        psm = np.ascontiguousarray((draws[:, :, None] == draws[:, None, :]).mean(axis=0))
        order = rng.permutation(args.n).astype(np.int64)

        def binder():
            lab = np.empty(args.n, dtype=np.int64)
            mod.binder_allocate(psm, order, lab)
            return lab

        t_binder, binder_out[name] = best_of(binder, args.repeat)

        saved = kernels.sweep_labels
        kernels.sweep_labels = mod.sweep_labels
        try:
            cfg = MCMCConfig("cla", n_iter=args.iters, burn_in=args.iters // 2, thin=1, seed=3)
            t_chain, chains[name] = best_of(lambda: run_chain(cfg, U), 1)
        finally:
            kernels.sweep_labels = saved
        print(
            f"{name:>8}: sweep {1e3 * t_sweep:8.2f} ms   binder {1e3 * t_binder:8.2f} ms   "
            f"chain {t_chain:6.2f} s ({1e3 * t_chain / args.iters:.2f} ms/iter)"
        )

    if len(backends) > 1:
        same = all(
            np.array_equal(labels_out["python"], labels_out[k])
            and np.array_equal(binder_out["python"], binder_out[k])
            and np.array_equal(chains["python"].theta, chains[k].theta)
            for k in backends
        )
        print(f"outputs identical across backends: {same}")


if __name__ == "__main__":
    main()

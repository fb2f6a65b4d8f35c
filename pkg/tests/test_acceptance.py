"""Acceptance criteria, one test each, at the stated tolerances.

Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured values
(visible in ``pytest -v`` output) before asserting.
"""

import itertools
import math
import time

import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from archimix.cli import main
from archimix.copulas import (
    CopulaFamily,
    Theta,
    copula_cdf,
    empirical_kendall_tau,
    generator_d1,
    generator_d2,
    kendall_tau,
    log_density_multi,
    sample_copula,
    tau_monte_carlo,
)
from archimix.dataio import read_dataset
from archimix.inference import binder_loss, coclustering_matrix, select_partition
from archimix.prior import HyperPrior, PDHyper, eppf_log, hyperprior_logdensity
from archimix.sampler import FlatLikelihood, MCMCConfig, run_chain
from archimix.simulation import gaussian_benchmark_fit, gaussian_copula_sample, gaussian_tau

from .conftest import FAMILY_THETAS, density_mass, exhaustive_binder, mp_generator, set_partitions

SEED = 7


def report(capsys, number, title, ok, detail, started):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail} | {time.time() - started:.1f}s")
    assert ok, detail


def seating_probability(labels, b):
    """Chinese-restaurant seating probability of a labelled order (discount 0)."""
    prob, counts = 1.0, []
    for i, lab in enumerate(labels):
        if lab == len(counts):
            prob *= b / (b + i) if i else 1.0
            counts.append(1)
        else:
            prob *= counts[lab] / (b + i)
            counts[lab] += 1
    return prob


def read_summary(path):
    head, table = {}, []
    lines = path.read_text().splitlines()
    blank = lines.index("")
    for line in lines[:blank]:
        key, value = (s.strip() for s in line.split("=", 1))
        head[key] = value
    for line in lines[blank + 2 :]:
        c, size, mean, lo, hi, w = line.split(",")
        table.append(dict(size=int(size), mean=float(mean), lower=float(lo), upper=float(hi), weight=float(w)))
    return head, table


def cli(*args):
    code = main([str(a) for a in args])
    assert code == 0, f"archimix {' '.join(map(str, args))} exited with {code}"


def fit_pipeline(root, preset, family, seed=SEED, iters=3000, burnin=1500, thin=3, data=None):
    """simulate -> fit -> summarize through the command line; returns the fit directory."""
    if data is None:
        sim = root / f"{preset}-data"
        cli("simulate", "--preset", preset, "--seed", seed, "--out", sim)
        data = sim / "data.csv"
    out = root / f"{preset}-{family}"
    cli("fit", "--data", data, "--family", family, "--seed", seed, "--iters", iters, "--burnin", burnin, "--thin", thin, "--out", out)
    cli("summarize", "--out", out)
    return out


@pytest.fixture(scope="module")
def clayton_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim1-cla")
    t0 = time.time()
    cla = fit_pipeline(root, "sim1-cla-200", "cla")
    t_cla = time.time() - t0
    amh = fit_pipeline(root, "sim1-cla-200", "amh", data=root / "sim1-cla-200-data" / "data.csv")
    return dict(root=root, cla=cla, amh=amh, t_cla=t_cla, t_all=time.time() - t0)


# -- 1 -------------------------------------------------------------------------------------


def test_criterion_01_kernel_oracles(capsys):
    t0 = time.time()
    mp.mp.dps = 40
    worst_mass, worst_z, worst_deriv = 0.0, 0.0, 0.0
    rng = np.random.default_rng(1)
    for family, thetas in FAMILY_THETAS.items():
        fam = CopulaFamily(family)
        for th in thetas:
            theta = Theta(fam, th)
            mass, _ = density_mass(family, th)
            worst_mass = max(worst_mass, abs(mass - 1.0))
            tau, se = tau_monte_carlo(theta, 10**5, rng, return_se=True)
            worst_z = max(worst_z, abs(kendall_tau(theta) - tau) / se)
            for t in (0.1, 0.35, 0.6, 0.9):
                f = lambda s: mp_generator(family, th, s)  # noqa: E731
                fd1 = float(mp.diff(f, mp.mpf(t), 1))
                fd2 = float(mp.diff(f, mp.mpf(t), 2))
                d1, d2 = generator_d1(theta, t), generator_d2(theta, t)
                worst_deriv = max(worst_deriv, abs(d1 / fd1 - 1), abs(d2 / fd2 - 1))
    ok = worst_mass <= 1e-3 and worst_z <= 3.0 and worst_deriv <= 1e-6
    detail = f"max |mass-1|={worst_mass:.2e} (<=1e-3), max |tau-MC|/SE={worst_z:.2f} (<=3), max FD rel err={worst_deriv:.2e} (<=1e-6)"
    report(capsys, 1, "kernel oracle suite", ok, detail, t0)


# -- 2 -------------------------------------------------------------------------------------


def test_criterion_02_clayton_four_dimensional_density(capsys):
    t0 = time.time()
    theta = Theta(CopulaFamily.CLA, 5.0)
    # fourth-order central stencil in each coordinate, tensorized over the 4 coordinates
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    O = np.array(list(itertools.product(offsets, repeat=4)))
    W = np.prod(np.array(list(itertools.product(weights, repeat=4))), axis=1)
    h = 1.5e-3
    # interior evaluation points drawn from the copula itself
    pts = sample_copula(theta, 4, 400, np.random.default_rng(SEED))
    pts = pts[np.all((pts > 0.05) & (pts < 0.95), axis=1)][:20]
    errs = []
    for u in pts:
        fd = float((W * copula_cdf(theta, u[None, :] + O * h)).sum() / h**4)
        errs.append(abs(fd / math.exp(log_density_multi(theta, u)) - 1.0))
    ok = len(errs) == 20 and max(errs) <= 1e-3
    report(capsys, 2, "Clayton p=4 density vs mixed differences", ok, f"20 points, max rel err={max(errs):.2e} (<=1e-3)", t0)


# -- 3 -------------------------------------------------------------------------------------


def test_criterion_03_eppf_exactness(capsys):
    t0 = time.time()
    worst_sum, worst_crp = 0.0, 0.0
    for n in range(1, 9):
        parts = list(set_partitions(n))
        counts = [np.bincount(p) for p in parts]
        for a, b in [(0.0, 1.0), (0.0, 0.3), (0.25, 2.0), (0.5, -0.4), (0.9, 5.0)]:
            total = math.fsum(math.exp(eppf_log(c, PDHyper(a, b))) for c in counts)
            worst_sum = max(worst_sum, abs(total - 1.0))
        for b in (0.3, 1.0, 4.0):
            for p, c in zip(parts, counts):
                crp = seating_probability(p, b)
                worst_crp = max(worst_crp, abs(math.exp(eppf_log(c, PDHyper(0.0, b))) / crp - 1.0))
    ok = worst_sum <= 1e-10 and worst_crp <= 1e-10
    detail = f"max |sum-1|={worst_sum:.1e} (<=1e-10), max rel diff to CRP={worst_crp:.1e}"
    report(capsys, 3, "EPPF sums to one and equals CRP", ok, detail, t0)


# -- 4 -------------------------------------------------------------------------------------


def test_criterion_04_prior_recovery(capsys):
    t0 = time.time()
    n, sweeps = 6, 10**5
    hp = HyperPrior()
    # 400 tuning batches before the counted sweeps; the step sizes start far from the prior scale of a
    cfg = MCMCConfig("cla", n_iter=20000 + sweeps, burn_in=20000, thin=1, seed=SEED, hp=hp)
    draws = run_chain(cfg, np.full((n, 2), 0.5), likelihood=FlatLikelihood(n))
    parts = list(set_partitions(n))
    index = {tuple(p): k for k, p in enumerate(parts)}
    freq = np.zeros(len(parts))
    for lab in draws.labels:
        freq[index[tuple(lab)]] += 1

    # prior partition probabilities: EPPF averaged over the hyperprior, by Gauss-Legendre in (a, s = b + a)
    xa, wa = np.polynomial.legendre.leggauss(200)
    a_nodes, a_w = (xa + 1) / 2, wa / 2
    s_nodes, s_w = np.polynomial.laguerre.laggauss(120)
    s_nodes, s_w = s_nodes / hp.d_b, s_w / hp.d_b * np.exp(s_nodes)

    def marginal(counts):
        tot = 0.0
        for a, wa_ in zip(a_nodes, a_w):
            vals = [
                math.exp(eppf_log(counts, PDHyper(a, s - a)) + hyperprior_logdensity((a, s - a), hp)) for s in s_nodes
            ]
            tot += wa_ * float(np.dot(s_w, vals))
        return tot

    cache = {}
    probs = np.array([cache.setdefault(tuple(sorted(np.bincount(p))), marginal(np.bincount(p))) for p in parts])
    chi2 = stats.chisquare(freq, probs / probs.sum() * sweeps)

    ks_a = stats.kstest(draws.a, stats.beta(hp.c_a, hp.d_a).cdf).statistic

    def b_cdf(x):
        x = np.asarray(x)[:, None]
        pa = stats.beta(hp.c_a, hp.d_a).pdf(a_nodes)
        return (a_w * pa * stats.gamma(hp.c_b, scale=1 / hp.d_b).cdf(x + a_nodes)).sum(axis=1)

    ks_b = stats.kstest(draws.b, b_cdf).statistic
    ok = chi2.pvalue > 1e-3 and ks_a <= 0.02 and ks_b <= 0.02 and abs(probs.sum() - 1) < 1e-6
    detail = f"chi2 p={chi2.pvalue:.3f} (>0.001), KS a={ks_a:.4f}, KS b={ks_b:.4f} (<=0.02), sum prior probs={probs.sum():.8f}"
    report(capsys, 4, "prior recovery with constant likelihood", ok, detail, t0)


# -- 5, 6, 10, 11 ------------------------------------------------------------------------------


def test_criterion_05_clayton_mixture_fit(clayton_runs, capsys):
    t0 = time.time() - clayton_runs["t_cla"]
    head, _ = read_summary(clayton_runs["cla"] / "summary.txt")
    U = read_dataset(clayton_runs["cla"] / "data.csv").values
    emp = empirical_kendall_tau(U[:, 0], U[:, 1])
    tau_hat, m = float(head["tau_hat"]), int(head["modal_m"])
    ok = m == 2 and abs(tau_hat - emp) <= 0.08
    detail = f"modal m={m} (==2), tau_hat={tau_hat:.3f}, empirical tau={emp:.3f}, diff={tau_hat - emp:+.3f} (|.|<=0.08)"
    report(capsys, 5, "sim1 CLA n=200 fit", ok, detail, t0)


def test_criterion_06_lpml_ordering(clayton_runs, capsys):
    t0 = time.time() - clayton_runs["t_all"]
    lp_cla = float(read_summary(clayton_runs["cla"] / "summary.txt")[0]["lpml"])
    lp_amh = float(read_summary(clayton_runs["amh"] / "summary.txt")[0]["lpml"])
    report(capsys, 6, "LPML ordering", lp_cla > lp_amh, f"LPML CLA={lp_cla:.2f} > AMH={lp_amh:.2f}", t0)


def test_criterion_07_ci_shrinkage(tmp_path, capsys):
    t0 = time.time()
    ci = {}
    for n in (200, 500):
        out = fit_pipeline(tmp_path, f"sim1-gum-{n}", "gum")
        head, _ = read_summary(out / "summary.txt")
        ci[n] = (float(head["tau_ci_low"]), float(head["tau_ci_high"]))
    covers = all(lo <= 0.85 <= hi for lo, hi in ci.values())
    narrower = ci[500][1] - ci[500][0] < ci[200][1] - ci[200][0]
    detail = f"n=200 CI=({ci[200][0]:.3f},{ci[200][1]:.3f}), n=500 CI=({ci[500][0]:.3f},{ci[500][1]:.3f}); cover 0.85 and shrink"
    report(capsys, 7, "GUM CI coverage and shrinkage", covers and narrower, detail, t0)


def test_criterion_08_gaussian_benchmark(capsys):
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    U = gaussian_copula_sample(0.7, 500, rng)
    fit = gaussian_benchmark_fit(U, n_iter=3000, rng=rng)
    true = float(gaussian_tau(0.7))
    ok = abs(fit.tau_hat - 0.49) <= 0.05 and fit.ci[0] <= true <= fit.ci[1]
    detail = f"tau_hat={fit.tau_hat:.3f} (0.49+-0.05), CI=({fit.ci[0]:.3f},{fit.ci[1]:.3f}) covers {true:.4f}"
    report(capsys, 8, "Gaussian benchmark", ok, detail, t0)


def test_criterion_09_partition_search(capsys):
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    matched, worst_gap = 0, 0.0
    for _ in range(20):
        n = int(rng.integers(3, 9))
        L = int(rng.integers(20, 200))
        k = int(rng.integers(2, 5))
        draws = rng.integers(0, k, size=(L, n))
        psm = coclustering_matrix(draws)
        _, best = exhaustive_binder(psm)
        found = binder_loss(select_partition(psm, rng=rng).labels, psm)
        worst_gap = max(worst_gap, found - best)
        matched += found <= best + 1e-12
    report(capsys, 9, "Binder search vs exhaustive", matched == 20, f"{matched}/20 optimal, max gap={worst_gap:.2e}", t0)


def test_criterion_10_refit_separation(clayton_runs, capsys):
    t0 = time.time()
    head, table = read_summary(clayton_runs["cla"] / "summary.txt")
    # the two principal clusters; Binder may add small clusters of ambiguous points
    main = sorted(table, key=lambda c: -c["size"])[:2]
    intervals = sorted((c["lower"], c["upper"]) for c in main)
    ok = len(main) == 2 and intervals[0][1] < 0.0 and intervals[1][0] > 5.0
    shown = ", ".join(f"({lo:.3f},{hi:.3f})" for lo, hi in intervals)
    sizes = "/".join(str(c["size"]) for c in main)
    detail = f"selected m={head['selected_m']}, two largest (sizes {sizes}) intervals {shown}"
    report(capsys, 10, "post-MCMC refit separation", ok, detail, t0)


def test_criterion_11_determinism(clayton_runs, capsys):
    t0 = time.time()
    again = fit_pipeline(clayton_runs["root"] / "rerun", "sim1-cla-200", "cla")
    same_draws = (again / "draws.csv").read_bytes() == (clayton_runs["cla"] / "draws.csv").read_bytes()
    same_data = (again / "data.csv").read_bytes() == (clayton_runs["cla"] / "data.csv").read_bytes()
    same_summary = (again / "summary.txt").read_bytes() == (clayton_runs["cla"] / "summary.txt").read_bytes()
    ok = same_draws and same_data and same_summary
    detail = f"draws identical={same_draws}, data identical={same_data}, summary identical={same_summary}"
    report(capsys, 11, "determinism of the CLI pipeline", ok, detail, t0)

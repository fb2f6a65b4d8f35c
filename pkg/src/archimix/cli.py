"""Command-line entry point: ``archimix {simulate,fit,summarize,density-grid}``.

Every failure exits nonzero after printing a single stderr line of the form
``archimix-error code=<n> kind=<kind>: <message>``; codes are 2 (config),
3 (data) and 4 (numerical abort).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .copulas import CopulaFamily, DomainError, UnsupportedOrderError
from .dataio import (
    ConfigError,
    DataError,
    Dataset,
    RunConfig,
    acf,
    encode_state,
    parse_config,
    read_dataset,
    read_draws,
    write_config,
    write_dataset,
    write_draws,
)
from .inference import (
    coclustering_matrix,
    density_grid,
    lpml,
    modal_m,
    post_mcmc_refit,
    posterior_tau,
    select_partition,
)
from .sampler import CopulaLikelihood, NumericalError, run_chain
from .simulation import PRESETS, GaussianSpec, MixtureSpec, sample_gaussian_mixture, sample_mixture

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

DATA_FILE = "data.csv"
DRAWS_FILE = "draws.csv"
CONFIG_FILE = "config.txt"
DIAGNOSTICS_FILE = "diagnostics.csv"
TRACE_FILE = "trace.csv"
ACF_FILE = "acf.csv"
SUMMARY_FILE = "summary.txt"
GRID_FILE = "density_grid.csv"


def _fmt(x) -> str:
    return f"{float(x):.17g}"


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as a config error line instead of argparse's usage text."""

    def error(self, message):
        sys.exit(_fail(EXIT_CONFIG, "config", f"{self.prog}: {message}"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="archimix", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    common(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--n", type=int, dest="sim_n", help="override the preset sample size")

    p = sub.add_parser("fit", help="run the sampler and write draws and diagnostics")
    common(p)
    p.add_argument("--data", help="CSV dataset with a header row")
    p.add_argument("--preset", choices=sorted(PRESETS), help="simulate the data from a preset")
    p.add_argument("--family", choices=[f.value for f in CopulaFamily])
    p.add_argument("--rank-transform", choices=["on", "off"])
    p.add_argument("--iters", type=int, dest="n_iter")
    p.add_argument("--burnin", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)

    p = sub.add_parser("summarize", help="LPML, Kendall tau, partition and cluster table of a fit")
    common(p)

    p = sub.add_parser("density-grid", help="posterior predictive bivariate density grid of a fit")
    common(p)
    p.add_argument("--grid", type=int, dest="grid_size")
    p.add_argument("--pair", help="two zero-based column indices, e.g. 0,1")
    return parser


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = RunConfig()
    explicit_family = False
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        explicit_family = any(line.split("#", 1)[0].split("=", 1)[0].strip() == "family" for line in text.splitlines())
        cfg = parse_config(text, cfg)
    for key in ("seed", "out", "data", "preset", "family", "n_iter", "burn_in", "thin", "grid_size", "sim_n"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
            explicit_family |= key == "family"
    if getattr(args, "rank_transform", None) is not None:
        cfg.rank_transform = args.rank_transform == "on"
    if getattr(args, "pair", None):
        try:
            i, j = (int(x) for x in args.pair.split(","))
        except ValueError:
            raise ConfigError(f"--pair expects two comma-separated indices, got {args.pair!r}") from None
        cfg.pair = (i, j)
    if cfg.preset is not None:
        if cfg.preset not in PRESETS:
            raise ConfigError(f"unknown preset {cfg.preset!r}")
        spec = PRESETS[cfg.preset]
        if isinstance(spec, MixtureSpec) and not explicit_family:
            cfg.family = spec.family.value
    try:
        CopulaFamily.parse(cfg.family)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _simulate_dataset(cfg: RunConfig) -> Dataset:
    if cfg.preset is None:
        raise ConfigError("simulate needs --preset (or preset = NAME in the config)")
    spec = PRESETS[cfg.preset]
    if cfg.sim_n is not None:
        if cfg.sim_n < 1:
            raise ConfigError("sample size must be positive")
        spec = dataclasses.replace(spec, n=cfg.sim_n)
    rng = np.random.default_rng(cfg.seed)
    values = sample_gaussian_mixture(spec, rng) if isinstance(spec, GaussianSpec) else sample_mixture(spec, rng)
    return Dataset(values, [f"u{j + 1}" for j in range(values.shape[1])])


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    ds = _simulate_dataset(cfg)
    write_dataset(_out_dir(cfg) / DATA_FILE, ds)
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.data is not None:
        ds = read_dataset(cfg.data, rank=cfg.rank_transform)
    elif cfg.preset is not None:
        ds = _simulate_dataset(cfg)
    else:
        raise ConfigError("fit needs --data or --preset")
    if ds.n < 2:
        raise DataError(f"need at least 2 observations, got {ds.n}")
    mcmc = cfg.mcmc_config(ds.p)
    try:
        lik = CopulaLikelihood(mcmc.family, ds.values)
    except UnsupportedOrderError as exc:
        raise ConfigError(str(exc)) from None
    draws = run_chain(mcmc, ds.values, likelihood=lik)
    if draws.n_kept == 0:
        raise ConfigError("no draws kept; increase iterations or lower thin")
    out = _out_dir(cfg)
    write_dataset(out / DATA_FILE, ds)
    saved = dataclasses.replace(cfg, data=DATA_FILE, preset=None, rank_transform=False)
    write_config(out / CONFIG_FILE, saved)
    write_draws(out / DRAWS_FILE, draws)
    _write_diagnostics(out, draws)
    return 0


def _write_diagnostics(out: Path, draws) -> None:
    cols = ["batch", "iteration", "ar_theta", "ar_a", "ar_b", "kappa_theta", "kappa_a", "kappa_b"]
    lines = [",".join(cols)]
    for rec in draws.batches:
        lines.append(",".join(str(rec[c]) if c in ("batch", "iteration") else _fmt(rec[c]) for c in cols))
    (out / DIAGNOSTICS_FILE).write_text("\n".join(lines) + "\n")

    pooled = draws.theta.mean(axis=1)
    lines = ["iter,a,b,m,theta_pooled"]
    for l in range(draws.n_kept):
        lines.append(f"{draws.iterations[l]},{_fmt(draws.a[l])},{_fmt(draws.b[l])},{draws.m[l]},{_fmt(pooled[l])}")
    (out / TRACE_FILE).write_text("\n".join(lines) + "\n")

    acf_b, acf_t = acf(draws.b), acf(pooled)
    lines = ["lag,acf_b,acf_theta_pooled"]
    lines += [f"{k},{_fmt(acf_b[k])},{_fmt(acf_t[k])}" for k in range(acf_b.size)]
    (out / ACF_FILE).write_text("\n".join(lines) + "\n")


def _load_fit(cfg: RunConfig, args):
    out = Path(cfg.out)
    if not (out / DRAWS_FILE).exists():
        raise DataError(f"no {DRAWS_FILE} in {out}; run fit first")
    saved = parse_config((out / CONFIG_FILE).read_text()) if (out / CONFIG_FILE).exists() else cfg
    if args.config:
        saved = parse_config(Path(args.config).read_text(), saved)
    for key in ("seed", "grid_size"):
        if getattr(args, key, None) is not None:
            setattr(saved, key, getattr(args, key))
    if getattr(args, "pair", None):
        saved.pair = cfg.pair
    saved.out = str(out)
    ds = read_dataset(out / DATA_FILE)
    mcmc = saved.mcmc_config(ds.p)
    lik = CopulaLikelihood(mcmc.family, ds.values)
    draws = read_draws(out / DRAWS_FILE, mcmc.family, lik)
    if draws.n != ds.n:
        raise DataError("draws and dataset disagree on the number of observations")
    return saved, ds, mcmc, draws


def cmd_summarize(cfg: RunConfig, args) -> int:
    saved, ds, mcmc, draws = _load_fit(cfg, args)
    rng = np.random.default_rng(saved.seed)
    lp, _ = lpml(draws)
    tau_hat, (lo, hi), _ = posterior_tau(draws, mcmc.g0, rng)
    psm = coclustering_matrix(draws)
    part = select_partition(psm, saved.n_candidates, rng)
    clusters = post_mcmc_refit(part, ds.values, mcmc, draws, rng, saved.refit_iter, saved.refit_burn_in)
    freq = np.bincount(draws.m)
    lines = [
        f"family = {mcmc.family.value}",
        f"n = {ds.n}",
        f"p = {ds.p}",
        f"kept_draws = {draws.n_kept}",
        f"lpml = {_fmt(lp)}",
        f"tau_hat = {_fmt(tau_hat)}",
        f"tau_ci_low = {_fmt(lo)}",
        f"tau_ci_high = {_fmt(hi)}",
        f"modal_m = {modal_m(draws)}",
        "m_frequencies = " + " ".join(f"{k}:{c}" for k, c in enumerate(freq) if c),
        f"selected_m = {part.m}",
        "partition = " + encode_state(part.labels, np.zeros(part.labels.size)).split("|")[0],
        "",
        "cluster,size,mean,q2.5,q97.5,weight",
    ]
    for c in clusters:
        lines.append(f"{c.cluster},{c.size},{_fmt(c.mean)},{_fmt(c.lower)},{_fmt(c.upper)},{_fmt(c.weight)}")
    (Path(saved.out) / SUMMARY_FILE).write_text("\n".join(lines) + "\n")
    return 0


def cmd_density_grid(cfg: RunConfig, args) -> int:
    saved, ds, mcmc, draws = _load_fit(cfg, args)
    i, j = saved.pair
    if not (0 <= i < ds.p and 0 <= j < ds.p and i != j):
        raise ConfigError(f"pair {saved.pair} is not two distinct columns of a {ds.p}-column dataset")
    if saved.grid_size < 2:
        raise ConfigError("grid size must be >= 2")
    rng = np.random.default_rng(saved.seed)
    grid = density_grid(draws, mcmc.g0, saved.grid_size, (i, j), rng)
    lines = [f"# G={grid.G} pair={i},{j} family={grid.family.value}"]
    lines += [",".join(_fmt(v) for v in row) for row in grid.values]
    (Path(saved.out) / GRID_FILE).write_text("\n".join(lines) + "\n")
    return 0


def _fail(code: int, kind: str, message: str) -> int:
    text = " ".join(str(message).split())
    print(f"archimix-error code={code} kind={kind}: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "summarize":
            return cmd_summarize(cfg, args)
        return cmd_density_grid(cfg, args)
    except DataError as exc:
        return _fail(EXIT_DATA, "data", exc)
    except (ConfigError, UnsupportedOrderError, DomainError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (NumericalError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())

"""Datasets, run configuration and result files."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .copulas import BOUNDARY_EPS, CopulaFamily
from .prior import CenteringMeasure, HyperPrior
from .sampler import AdaptationMode, MCMCConfig, PosteriorDraws

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "RunConfig",
    "rank_transform",
    "read_dataset",
    "write_dataset",
    "parse_config",
    "write_config",
    "write_draws",
    "read_draws",
    "encode_state",
    "decode_state",
    "acf",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Unreadable or invalid dataset."""


@dataclass
class Dataset:
    values: np.ndarray
    columns: list

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError("dataset must be a two-dimensional table")
        if len(self.columns) != v.shape[1]:
            raise DataError("one column name per column is required")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def rank_transform(raw) -> np.ndarray:
    """Pseudo-observations: column-wise average ranks divided by n + 1."""
    x = np.asarray(raw, dtype=float)
    if x.ndim != 2:
        raise DataError("raw data must be an n x p table")
    if x.shape[0] < 2:
        raise DataError("rank transform needs n >= 2")
    if np.isnan(x).any():
        i, j = np.argwhere(np.isnan(x))[0]
        raise DataError(f"missing value at row {i + 1}, column {j + 1}")
    return rankdata(x, method="average", axis=0) / (x.shape[0] + 1.0)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def read_dataset(path, rank: bool = False) -> Dataset:
    """CSV with one header row.  Values are clamped to [1e-12, 1 - 1e-12].

    Without ``rank`` every value must already lie in [0, 1].
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [c.strip() for c in rows[0]]
    body = rows[1:]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"row {i + 1} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(f"non-numeric value {cell.strip()!r} at row {i + 1}, column {header[j]!r}") from None
            if math.isnan(values[i, j]):
                raise DataError(f"missing value at row {i + 1}, column {header[j]!r}")
    if rank:
        values = rank_transform(values)
    elif values.size:
        out = np.argwhere((values < 0.0) | (values > 1.0))
        if out.size:
            i, j = out[0]
            raise DataError(
                f"value {values[i, j]!r} at row {i + 1}, column {header[j]!r} is outside [0, 1]; use --rank-transform on"
            )
    return Dataset(np.clip(values, BOUNDARY_EPS, 1.0 - BOUNDARY_EPS), header)


def write_dataset(path, data) -> None:
    if not isinstance(data, Dataset):
        arr = np.asarray(data, dtype=float)
        data = Dataset(arr, [f"u{j + 1}" for j in range(arr.shape[1])])
    lines = [",".join(data.columns)]
    lines += [",".join(_fmt(x) for x in row) for row in data.values]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    family: str = "cla"
    data: str | None = None
    preset: str | None = None
    out: str = "."
    rank_transform: bool = False
    seed: int = 0
    n_iter: int = 15000
    burn_in: int = 5000
    thin: int = 5
    r_aux: int = 3
    batch_size: int = 50
    target_low: float = 0.3
    target_high: float = 0.4
    adaptation: str = "bounded"
    kappa_theta: float = 0.1
    kappa_a: float = 1.0
    kappa_b: float = 1.0
    g0_shape: float = 4.0
    g0_rate: float = 1.0
    g0_mean: float = 0.0
    g0_precision: float = 4.0
    c_a: float = 1.0
    d_a: float = 20.0
    c_b: float = 1.0
    d_b: float = 20.0
    n_candidates: int = 16
    refit_iter: int = 2000
    refit_burn_in: int = 500
    grid_size: int = 50
    pair: tuple = (0, 1)
    sim_n: int | None = None

    def mcmc_config(self, p: int) -> MCMCConfig:
        try:
            fam = CopulaFamily.parse(self.family)
            g0 = CenteringMeasure(fam, self.g0_shape, self.g0_rate, self.g0_mean, self.g0_precision, p)
            hp = HyperPrior(self.c_a, self.d_a, self.c_b, self.d_b)
            return MCMCConfig(
                family=fam,
                g0=g0,
                hp=hp,
                r_aux=self.r_aux,
                n_iter=self.n_iter,
                burn_in=self.burn_in,
                thin=self.thin,
                seed=self.seed,
                batch_size=self.batch_size,
                target_low=self.target_low,
                target_high=self.target_high,
                adaptation=AdaptationMode(self.adaptation),
                kappa_theta=self.kappa_theta,
                kappa_a=self.kappa_a,
                kappa_b=self.kappa_b,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str):
    f = _FIELDS[key]
    raw = raw.strip()
    default = f.default
    if key == "pair":
        parts = raw.replace(" ", "").split(",")
        if len(parts) != 2:
            raise ConfigError(f"pair must be two comma-separated indices, got {raw!r}")
        return tuple(int(x) for x in parts)
    if key == "rank_transform":
        low = raw.lower()
        if low in ("on", "true", "1", "yes"):
            return True
        if low in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"rank_transform must be on or off, got {raw!r}")
    if key in ("data", "preset", "sim_n") and raw.lower() in ("", "none"):
        return None
    if key == "sim_n" or isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _convert(key, value))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return cfg


def write_config(path, cfg: RunConfig) -> None:
    lines = []
    for key in _FIELDS:
        v = getattr(cfg, key)
        if key == "pair":
            v = f"{v[0]},{v[1]}"
        elif key == "rank_transform":
            v = "on" if v else "off"
        elif isinstance(v, float):
            v = _fmt(v)
        lines.append(f"{key} = {'none' if v is None else v}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# draws


def encode_state(labels, theta) -> str:
    """Run-length labels and θ* values: ``"0:3 1:2 0:1|θ*_0 θ*_1"``."""
    labels = np.asarray(labels)
    theta = np.asarray(theta)
    runs = []
    start = 0
    for i in range(1, labels.size + 1):
        if i == labels.size or labels[i] != labels[start]:
            runs.append(f"{labels[start]}:{i - start}")
            start = i
    m = int(labels.max()) + 1
    atoms = np.empty(m)
    atoms[labels[::-1]] = theta[::-1]
    return " ".join(runs) + "|" + " ".join(_fmt(x) for x in atoms)


def decode_state(field_text: str):
    """Inverse of :func:`encode_state`; returns ``(labels, theta_star)``."""
    try:
        runs, atoms = field_text.split("|")
        labels = []
        for tok in runs.split():
            lab, count = tok.split(":")
            labels.extend([int(lab)] * int(count))
        theta_star = np.array([float(x) for x in atoms.split()])
    except ValueError:
        raise DataError(f"malformed state field {field_text[:40]!r}") from None
    labels = np.array(labels, dtype=np.int64)
    if labels.size and labels.max() >= theta_star.size:
        raise DataError("state field has a label without a parameter")
    return labels, theta_star


def write_draws(path, draws: PosteriorDraws) -> None:
    """One row per kept draw: iter, a, b, m and the quoted run-length state."""
    lines = ["iter,a,b,m,state"]
    for l in range(draws.n_kept):
        state = encode_state(draws.labels[l], draws.theta[l])
        lines.append(f'{int(draws.iterations[l])},{_fmt(draws.a[l])},{_fmt(draws.b[l])},{int(draws.m[l])},"{state}"')
    Path(path).write_text("\n".join(lines) + "\n")


def read_draws(path, family, lik=None) -> PosteriorDraws:
    """Load a draws file; per-observation log-densities come from ``lik`` (zeros if absent)."""
    path = Path(path)
    try:
        rows = list(csv.reader(path.read_text().splitlines()))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not rows or rows[0] != ["iter", "a", "b", "m", "state"]:
        raise DataError(f"{path} is not a draws file")
    body = rows[1:]
    if not body:
        raise DataError(f"{path} holds no draws")
    it, a, b, m, labels, theta = [], [], [], [], [], []
    for row in body:
        lab, star = decode_state(row[4])
        it.append(int(row[0]))
        a.append(float(row[1]))
        b.append(float(row[2]))
        m.append(int(row[3]))
        labels.append(lab)
        theta.append(star[lab])
    labels = np.array(labels, dtype=np.int64)
    theta = np.array(theta)
    loglik = np.vstack([lik.pointwise(t) for t in theta]) if lik is not None else np.zeros(theta.shape)
    return PosteriorDraws(
        family=CopulaFamily.parse(family),
        iterations=np.array(it, dtype=np.int64),
        a=np.array(a),
        b=np.array(b),
        m=np.array(m, dtype=np.int64),
        labels=labels,
        theta=theta,
        loglik=loglik,
    )


def acf(x, max_lag: int = 50) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    lags = min(max_lag, x.size - 1)
    if denom == 0.0:
        out = np.zeros(lags + 1)
        out[0] = 1.0
        return out
    return np.array([np.dot(x[: x.size - k], x[k:]) / denom for k in range(lags + 1)])

"""Benchmark objectives (all maximized), tabular oracles and initial designs."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .optim import Rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    dim: int
    bounds: np.ndarray
    evaluate: Callable[[np.ndarray], float]
    optimum: float
    kind: str = "synthetic"


def levy(x) -> float:
    x = np.asarray(x, dtype=float)
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(np.pi * w[0]) ** 2
    mid = np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:-1] + 1.0) ** 2))
    tail = (w[-1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[-1]) ** 2)
    return float(-(head + mid + tail))


HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
HARTMANN3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
HARTMANN3_P = np.array([
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.03815, 0.5743, 0.8828],
])
HARTMANN6_A = np.array([
    [10, 3, 17, 3.5, 1.7, 8],
    [0.05, 10, 17, 0.1, 8, 14],
    [3, 3, 1.7, 10, 17, 8],
    [17, 8, 0.05, 10, 0.1, 14],
], dtype=float)
HARTMANN6_P = np.array([
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
])

# Frozen from a 300-start L-BFGS-B search with the constants above.  Row 3 of
# the 6-D matrix uses A[2,1] = 3 (the common literature table has 3.5, whose
# maximum is 3.322368).
HARTMANN3_MAX = 3.862782147820755
HARTMANN6_MAX = 3.3224081622136863


def hartmann(x, d: int | None = None) -> float:
    x = np.asarray(x, dtype=float)
    d = x.size if d is None else d
    if d == 3:
        A, P = HARTMANN3_A, HARTMANN3_P
    elif d == 6:
        A, P = HARTMANN6_A, HARTMANN6_P
    else:
        raise ValueError(f"Hartmann is defined for d in {{3, 6}}, got {d}")
    return float(HARTMANN_ALPHA @ np.exp(-np.sum(A * (x[None, :] - P) ** 2, axis=1)))


def latin_hypercube(rng: Rng, n: int, d: int) -> np.ndarray:
    """One point per stratum per dimension; strata shuffled per dimension.

    Stream use: for each dimension, ``n`` uniforms for the jitter followed by
    one permutation of ``n``.
    """
    if n < 1:
        raise ValueError("need at least one design point")
    out = np.empty((n, d))
    for j in range(d):
        jitter = rng.uniform(n)
        perm = rng.permutation(n)
        out[:, j] = (perm + jitter) / n
    return out


class IngestionError(ValueError):
    pass


@dataclass
class TabularOracle:
    points_norm: np.ndarray
    values: np.ndarray
    bounds: np.ndarray
    k: int = 12
    power: float = 2.0
    epsilon: float = 1e-12
    grid: Optional[RegularGridInterpolator] = None
    points_raw: Optional[np.ndarray] = None

    @property
    def mode(self) -> str:
        return "multilinear" if self.grid is not None else "knn"

    def normalize(self, x):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        width = np.where(hi > lo, hi - lo, 1.0)
        return (np.clip(np.asarray(x, dtype=float), lo, hi) - lo) / width

    def __call__(self, x) -> float:
        return oracle_eval(self, x)


def _parse_rows(rows, d_plus_1=None):
    parsed = []
    for i, row in enumerate(rows):
        row = list(row)
        if d_plus_1 is None:
            d_plus_1 = len(row)
        if len(row) != d_plus_1:
            raise IngestionError(f"row {i}: expected {d_plus_1} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except (TypeError, ValueError) as exc:
            raise IngestionError(f"row {i}: non-numeric entry ({exc})") from None
        if any(math.isnan(v) for v in vals):
            raise IngestionError(f"row {i}: NaN entry")
        parsed.append(vals)
    return np.array(parsed, dtype=float)


def build_tabular_oracle(rows, k: int = 12, power: float = 2.0, epsilon: float = 1e-12,
                         name: str = "tabular"):
    """Build a deterministic continuous oracle from an ``m x (d+1)`` table.

    The last column is the objective.  Duplicate designs are averaged; a
    complete rectangular grid switches to multilinear interpolation.
    """
    table = _parse_rows(rows)
    if table.ndim != 2 or table.shape[1] < 2:
        raise IngestionError("table needs at least one input and one objective column")
    Xraw, y = table[:, :-1], table[:, -1]
    d = Xraw.shape[1]
    bounds = np.column_stack([Xraw.min(axis=0), Xraw.max(axis=0)])
    designs, inverse = np.unique(Xraw, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    sums = np.bincount(inverse, weights=y, minlength=len(designs))
    counts = np.bincount(inverse, minlength=len(designs))
    values = sums / counts
    if len(designs) < k:
        raise IngestionError(f"need at least k={k} distinct designs, got {len(designs)}")
    oracle = TabularOracle(np.zeros((0, d)), values, bounds, k, power, epsilon)
    oracle.points_norm = oracle.normalize(designs)
    oracle.points_raw = designs
    levels = [np.unique(oracle.points_norm[:, j]) for j in range(d)]
    if all(len(lv) >= 2 for lv in levels) and math.prod(len(lv) for lv in levels) == len(designs):
        grid = np.empty(tuple(len(lv) for lv in levels))
        idx = tuple(np.searchsorted(levels[j], oracle.points_norm[:, j]) for j in range(d))
        grid[idx] = values
        oracle.grid = RegularGridInterpolator(levels, grid, method="linear")
    task = TaskSpec(name, d, bounds, oracle, float(values.max()), "tabular")
    return task, oracle


def oracle_eval(oracle: TabularOracle, x) -> float:
    q = oracle.normalize(np.asarray(x, dtype=float).ravel())
    hit = np.flatnonzero(np.all(oracle.points_norm == q, axis=1))
    if hit.size:
        return float(oracle.values[hit[0]])
    if oracle.grid is not None:
        return float(oracle.grid(q[None])[0])
    dist = np.sqrt(np.sum((oracle.points_norm - q) ** 2, axis=1))
    nn = np.argsort(dist, kind="stable")[: oracle.k]
    w = (dist[nn] + oracle.epsilon) ** (-oracle.power)
    return float(w @ oracle.values[nn] / w.sum())


@dataclass(frozen=True)
class TabularConfig:
    inputs: tuple
    objective: str
    reference_bounds: tuple


TABULAR_CONFIGS = {
    "material5": TabularConfig(
        ("QAgNO3", "QPVA", "QTSC", "Qseed", "Qtot"), "score",
        ((4.53, 42.8098), (9.9995, 40.0010), (0.5, 30.5), (0.4989, 19.5), (200.0, 983.0)),
    ),
    "concrete7": TabularConfig(
        ("cement", "slag", "fly_ash", "water", "superplasticizer", "coarse_aggregate",
         "fine_aggregate"),
        "strength",
        ((102.0, 540.0), (0.0, 359.4), (0.0, 200.1), (121.8, 247.0), (0.0, 32.2),
         (801.0, 1145.0), (594.0, 992.6)),
    ),
    "crossbarrel4": TabularConfig(
        ("n", "theta", "r", "t"), "toughness",
        ((6.0, 12.0), (0.0, 200.0), (1.5, 2.5), (0.7, 1.4)),
    ),
}


def _norm_name(s: str) -> str:
    return "".join(ch for ch in s.lower() if ch.isalnum())


def read_table(path, inputs, objective):
    """Read the named columns from a headed CSV (names matched ignoring case
    and punctuation).  Falls back to positional columns when the file has
    exactly ``len(inputs) + 1`` columns and the names do not match."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = [r for r in reader if r]
    keys = [_norm_name(h) for h in header]
    wanted = [_norm_name(c) for c in (*inputs, objective)]
    if all(w in keys for w in wanted):
        cols = [keys.index(w) for w in wanted]
    elif len(header) == len(wanted):
        log.warning("%s: column names do not match, using positional columns", path)
        cols = list(range(len(header)))
    else:
        missing = [c for c, w in zip((*inputs, objective), wanted) if w not in keys]
        raise IngestionError(f"{path}: missing columns {missing}")
    rows = []
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise IngestionError(f"row {i}: expected {len(header)} fields, got {len(r)}")
        rows.append([r[c] for c in cols])
    return rows


class GpSample:
    """A function drawn (approximately) from a zero-mean Matern GP on
    ``[0, 1]^d`` via random Fourier features."""

    def __init__(self, rng: Rng, lengthscale: float = 0.2, nu: float = 2.5, dim: int = 1,
                 n_features: int = 2000):
        g = rng.gen
        chi = g.chisquare(2 * nu, size=n_features)
        self.omega = g.standard_normal((n_features, dim)) / lengthscale / np.sqrt(chi / (2 * nu))[:, None]
        self.phase = g.uniform(0, 2 * np.pi, n_features)
        self.weights = g.standard_normal(n_features) * np.sqrt(2.0 / n_features)
        self.lengthscale = lengthscale
        self.dim = dim

    def __call__(self, x) -> float:
        return float(self.batch(np.asarray(x, dtype=float).reshape(1, -1))[0])

    def batch(self, X):
        return np.cos(X @ self.omega.T + self.phase) @ self.weights

    def maximum(self, grid: int = 20001) -> float:
        if self.dim != 1:
            raise NotImplementedError("exact maximum only for d=1")
        xs = np.linspace(0.0, 1.0, grid)
        vals = self.batch(xs[:, None])
        i = int(np.argmax(vals))
        a, b = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
        res = minimize_scalar(lambda s: -self(np.array([s])), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12})
        return float(max(vals[i], -res.fun))


SYNTHETIC = ("levy5", "hartmann3", "hartmann6", "gp-sample")
TASKS = SYNTHETIC[:3] + tuple(TABULAR_CONFIGS)


def get_task(name: str, data: str | Path | None = None, seed: int = 0,
             lengthscale: float = 0.2) -> TaskSpec:
    """Task registry.  ``data`` is the CSV for tabular tasks; ``seed`` and
    ``lengthscale`` parameterize ``gp-sample``."""
    if name == "levy5":
        return TaskSpec(name, 5, np.tile([-10.0, 10.0], (5, 1)), levy, 0.0)
    if name == "hartmann3":
        return TaskSpec(name, 3, np.tile([0.0, 1.0], (3, 1)), hartmann, HARTMANN3_MAX)
    if name == "hartmann6":
        return TaskSpec(name, 6, np.tile([0.0, 1.0], (6, 1)), hartmann, HARTMANN6_MAX)
    if name == "gp-sample":
        f = GpSample(Rng(seed).split("gp-sample"), lengthscale)
        return TaskSpec(name, 1, np.array([[0.0, 1.0]]), f, f.maximum())
    if name in TABULAR_CONFIGS:
        if data is None or not Path(data).exists():
            raise FileNotFoundError(f"task {name} needs its CSV via --data")
        cfg = TABULAR_CONFIGS[name]
        task, _ = build_tabular_oracle(read_table(data, cfg.inputs, cfg.objective), name=name)
        return task
    raise ValueError(f"unknown task {name!r}")

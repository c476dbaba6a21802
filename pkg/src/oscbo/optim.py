"""Shared numerical utilities: projected Adam, finite differences, normal
distribution helpers and the splittable seeded generator."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    steps: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    space: str = "linear"  # "linear" or "log"

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.space not in ("linear", "log"):
            raise ValueError(f"unknown space {self.space!r}")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    skipped: int = 0


def finite_diff_grad(objective: Callable[[np.ndarray], float], x, h: float = 1e-5):
    """Central-difference gradient of a scalar function.

    A non-finite probe falls back to the one-sided difference on the other
    side; if both probes fail the component is set to zero and a warning is
    logged.
    """
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    f0 = None
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fp = objective(x + e)
        fm = objective(x - e)
        if np.isfinite(fp) and np.isfinite(fm):
            g[j] = (fp - fm) / (2 * h)
            continue
        if f0 is None:
            f0 = objective(x)
        if np.isfinite(fp) and np.isfinite(f0):
            g[j] = (fp - f0) / h
        elif np.isfinite(fm) and np.isfinite(f0):
            g[j] = (f0 - fm) / h
        else:
            log.warning("finite_diff_grad: both probes non-finite in coordinate %d", j)
            g[j] = 0.0
    return g


def adam_minimize(objective, x0, box, cfg: OptimizerConfig, grad=None) -> OptimizeResult:
    """Projected Adam returning the best iterate seen.

    ``box`` is a pair ``(lower, upper)`` in the original coordinates.  With
    ``cfg.space == "log"`` the iterates live in log coordinates; the box is
    mapped accordingly and the objective always receives original-space
    points.  ``grad`` (optional) takes an original-space point and returns the
    gradient with respect to the optimisation coordinates; by default central
    differences are taken in those coordinates.
    """
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if cfg.space == "log":
        to_x, from_x = np.exp, np.log
    else:
        to_x = from_x = lambda v: v
    ulo, uhi = from_x(lo), from_x(hi)
    u = np.clip(from_x(x0), ulo, uhi)

    def f_u(v):
        return objective(to_x(v))

    f_best = f_u(u)
    if not np.isfinite(f_best):
        raise FloatingPointError("objective is non-finite at the starting point")
    u_best = u.copy()
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    skipped = 0
    for k in range(1, cfg.steps + 1):
        g = grad(to_x(u)) if grad is not None else finite_diff_grad(f_u, u)
        if not np.all(np.isfinite(g)):
            skipped += 1
            break
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**k)
        vhat = v / (1 - cfg.beta2**k)
        u = np.clip(u - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps), ulo, uhi)
        fu = f_u(u)
        if not np.isfinite(fu):
            skipped += 1
            u = u_best.copy()
            continue
        if fu < f_best:
            f_best, u_best = fu, u.copy()
    return OptimizeResult(np.clip(to_x(u_best), lo, hi), float(f_best), skipped)


def normal_cdf(z):
    return special.ndtr(z)


def normal_pdf(z):
    return np.exp(-0.5 * np.asarray(z, dtype=float) ** 2) / np.sqrt(2 * np.pi)


def normal_quantile(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise ValueError(f"normal_quantile needs p in (0, 1), got {p}")
    z = special.ndtri(p_arr)
    # one Newton step on Phi(z) - p
    z = z - (special.ndtr(z) - p_arr) / normal_pdf(z)
    return float(z) if np.ndim(z) == 0 else z


class Rng:
    """Seeded generator whose children are derived from ``(seed, path)``.

    Children are built by hashing the label path into the spawn key of a
    :class:`numpy.random.SeedSequence`, which seeds a counter-based Philox
    bit generator.  A child depends only on the root seed and the labels used
    to reach it, never on how much the parent has already drawn.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def split(self, label: str) -> "Rng":
        key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "little")
        return Rng(self.seed, self.path + (key,))

    def uniform(self, size=None):
        return self.gen.random(size)

    def gaussian(self, size=None):
        return self.gen.standard_normal(size)

    def permutation(self, n: int):
        return self.gen.permutation(n)


def rng_split(rng: Rng, label: str) -> Rng:
    return rng.split(label)


def rng_uniform(rng: Rng, size=None):
    return rng.uniform(size)


def rng_gaussian(rng: Rng, size=None):
    return rng.gaussian(size)


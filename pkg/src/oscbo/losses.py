"""Per-round sharpness loss and calibration constraint, the exploration
scale schedule, and coverage / information-gain diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .gp import KernelSpec, kernel_matrix


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BetaSchedule:
    mode: str = "fixed"
    fixed_value: float = 2.0
    B: Optional[float] = None
    R: Optional[float] = None
    delta: Optional[float] = None
    gamma_fn: Optional[Callable[[int], float]] = None
    log_cover: float = 0.0

    def __post_init__(self):
        if self.mode not in ("fixed", "theoretical"):
            raise ConfigError(f"unknown beta mode {self.mode!r}")
        if self.fixed_value < 0:
            raise ConfigError("fixed beta must be non-negative")


@dataclass(frozen=True)
class RoundFeedback:
    sharpness: float
    calibration: float
    covered: bool
    ci_width: float
    beta: float


def sharpness_loss(latent_var, noise_var):
    return math.log1p(latent_var / noise_var) / math.log1p(1.0 / noise_var)


def calibration_constraint(y, mean, latent_var, noise_var, beta, p=2):
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    scale = math.sqrt(beta) * math.sqrt(latent_var + noise_var)
    return (abs(y - mean) / scale) ** p - 1.0


def beta_value(sched: BetaSchedule, t: int) -> float:
    if t < 1:
        raise ValueError("rounds are 1-based")
    if sched.mode == "fixed":
        return float(sched.fixed_value)
    if sched.B is None or sched.R is None or sched.delta is None or sched.gamma_fn is None:
        raise ConfigError("theoretical beta needs B, R, delta and gamma_fn")
    inner = sched.gamma_fn(t - 1) + 1.0 + sched.log_cover + math.log(6.0 / sched.delta)
    return (sched.B + sched.R * math.sqrt(2.0 * inner)) ** 2


def coverage_update(running, covered: bool):
    count, total = running
    count, total = count + int(bool(covered)), total + 1
    return (count, total), count / total


def ci_width(latent_var, noise_var, beta):
    return 2.0 * math.sqrt(beta) * math.sqrt(latent_var + noise_var)


def round_feedback(y, mean, latent_var, noise_var, beta, p=2) -> RoundFeedback:
    lc = calibration_constraint(y, mean, latent_var, noise_var, beta, p)
    return RoundFeedback(
        sharpness=sharpness_loss(latent_var, noise_var),
        calibration=lc,
        covered=lc <= 0.0,
        ci_width=ci_width(latent_var, noise_var, beta),
        beta=beta,
    )


def function_covered(f_value, mean, latent_var, beta) -> bool:
    """Function-level interval membership |f - mu| <= sqrt(beta) * sigma."""
    return abs(f_value - mean) <= math.sqrt(beta) * math.sqrt(latent_var)


def greedy_information_gain(spec: KernelSpec, candidates, t: int, noise_var: float) -> float:
    """Greedy lower bound on the maximum information gain over ``t`` of the
    candidate rows.

    Each step picks the candidate with the largest posterior variance given
    the points already chosen, which maximizes the marginal gain
    ``0.5 * log(1 + var / noise_var)``.
    """
    C = np.asarray(candidates, dtype=float)
    m = C.shape[0]
    if t > m:
        raise ValueError(f"budget t={t} exceeds the {m} candidates")
    K = kernel_matrix(spec, C)
    var = np.diag(K).copy()
    # incremental Cholesky columns of the chosen set against all candidates
    cols = np.zeros((t, m))
    chosen = []
    gain = 0.0
    for i in range(t):
        masked = var.copy()
        masked[chosen] = -np.inf
        j = int(np.argmax(masked))
        vj = max(var[j], 0.0)
        gain += 0.5 * math.log1p(vj / noise_var)
        c = (K[j] - cols[:i].T @ cols[:i, j]) / math.sqrt(vj + noise_var)
        cols[i] = c
        var = var - c * c
        chosen.append(j)
    return gain


def cor1_bound(betas, latent_vars, noise_var: float) -> float:
    betas = np.asarray(betas, dtype=float)
    lv = np.asarray(latent_vars, dtype=float)
    if betas.size == 0:
        raise ValueError("need at least one round")
    T = lv.size
    C = (1.0 / noise_var) / math.log1p(1.0 / noise_var)
    s = float(np.sum(4.0 * betas * noise_var * C * np.log1p(lv / noise_var)))
    return math.sqrt(T * s)

"""Acquisition values and the multi-start box-constrained maximizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from .gp import GpPosterior, predict
from .optim import Rng

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: str = "ucb"
    beta: float = 2.0
    best: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("ucb", "logei"):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if self.kind == "logei" and self.best is None:
            raise ValueError("LogEI needs the best observed value")


@dataclass(frozen=True)
class AcquisitionConfig:
    raw: int = 20
    restarts: int = 5
    steps: int = 50
    lr: float = 0.05
    h: float = 1e-5

    def __post_init__(self):
        if not self.raw >= self.restarts >= 1:
            raise ValueError("need raw >= restarts >= 1")


def ucb_value(mean, latent_var, beta):
    return mean + np.sqrt(beta) * np.sqrt(latent_var)


def _log_h(z):
    """log(z*Phi(z) + phi(z)) for array ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    mid = z >= -6.0
    zm = z[mid]
    out[mid] = np.log(zm * special.ndtr(zm) + np.exp(-0.5 * zm * zm - LOG_SQRT_2PI))
    u = -z[~mid]
    # h(z) = phi(z) * (1 - u*R(u)), R the Mills ratio Phi(-u)/phi(u)
    mills = special.erfcx(u / np.sqrt(2.0)) * np.sqrt(np.pi / 2.0)
    tail = np.where(
        u < 1e3,
        np.log(np.maximum(1.0 - u * mills, 1e-300)),
        # asymptotic series of 1 - u*R(u)
        np.log(1.0 / u**2 - 3.0 / u**4 + 15.0 / u**6),
    )
    out[~mid] = -0.5 * u * u - LOG_SQRT_2PI + tail
    return out


def logei_value(mean, latent_var, best):
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(latent_var, dtype=float)
    mean, var = np.broadcast_arrays(mean, var)
    out = np.empty(mean.shape)
    pos = var > 0
    sigma = np.sqrt(var[pos])
    out[pos] = np.log(sigma) + _log_h((mean[pos] - best) / sigma)
    gain = mean[~pos] - best
    with np.errstate(divide="ignore"):
        out[~pos] = np.where(gain > 0, np.log(np.where(gain > 0, gain, 1.0)), -np.inf)
    return float(out) if out.ndim == 0 else out


def acquisition_batch(post: GpPosterior, spec: AcquisitionSpec) -> Callable:
    def f(Xs):
        mean, var = predict(post, Xs)
        if spec.kind == "ucb":
            return ucb_value(mean, var, spec.beta)
        return logei_value(mean, var, spec.best)

    return f


def maximize(fn: Callable, d: int, rng: Rng, cfg: AcquisitionConfig = AcquisitionConfig()):
    """Maximize a batched function ``fn(m x d) -> m`` over ``[0, 1]^d``.

    Returns ``(x, value)``.  Raw samples are drawn uniformly, the best
    ``cfg.restarts`` (ties to the lowest index) are refined by projected Adam
    with central-difference gradients, and the best point seen overall wins.
    The restarts run in lockstep so each step costs one batched call.
    """
    raw = rng.uniform((cfg.raw, d))
    vals = np.asarray(fn(raw), dtype=float)
    order = np.argsort(-vals, kind="stable")[: cfg.restarts]
    best_x = raw[order[0]].copy()
    best_v = vals[order[0]]
    keep = np.isfinite(vals[order])
    if not keep.any():
        return best_x, float(best_v)
    u = raw[order[keep]].copy()
    r = u.shape[0]
    f_cur = vals[order[keep]].copy()
    u_best, f_best = u.copy(), f_cur.copy()
    active = np.ones(r, dtype=bool)
    m = np.zeros_like(u)
    v = np.zeros_like(u)
    b1, b2, eps = 0.9, 0.999, 1e-8
    eye = np.eye(d) * cfg.h
    for k in range(1, cfg.steps + 2):
        if k > 1:
            # value at the latest iterate plus probes for the next gradient
            probes = np.concatenate([u[:, None, :], u[:, None, :] + eye, u[:, None, :] - eye], axis=1)
            out = np.asarray(fn(probes.reshape(-1, d)), dtype=float).reshape(r, 2 * d + 1)
            f_cur = out[:, 0]
            bad = active & ~np.isfinite(f_cur)
            u[bad] = u_best[bad]
            better = active & np.isfinite(f_cur) & (f_cur > f_best)
            u_best[better], f_best[better] = u[better], f_cur[better]
            if k == cfg.steps + 1:
                break
            g = (out[:, 1:d + 1] - out[:, d + 1:]) / (2 * cfg.h)
            g[bad] = 0.0
        else:
            probes = np.concatenate([u[:, None, :] + eye, u[:, None, :] - eye], axis=1)
            out = np.asarray(fn(probes.reshape(-1, d)), dtype=float).reshape(r, 2 * d)
            g = (out[:, :d] - out[:, d:]) / (2 * cfg.h)
            bad = np.zeros(r, dtype=bool)
        active &= np.all(np.isfinite(g), axis=1)
        step = ~bad & active
        g = np.where(step[:, None], g, 0.0)
        m = np.where(step[:, None], b1 * m + (1 - b1) * g, m)
        v = np.where(step[:, None], b2 * v + (1 - b2) * g * g, v)
        upd = cfg.lr * (m / (1 - b1**k)) / (np.sqrt(v / (1 - b2**k)) + eps)
        u = np.where(step[:, None], np.clip(u + upd, 0.0, 1.0), u)
    i = int(np.argmax(f_best))
    if f_best[i] > best_v:
        best_x, best_v = u_best[i].copy(), f_best[i]
    return best_x, float(best_v)


def maximize_acquisition(post: GpPosterior, spec: AcquisitionSpec, d: int, rng: Rng,
                         cfg: AcquisitionConfig = AcquisitionConfig()):
    return maximize(acquisition_batch(post, spec), d, rng, cfg)

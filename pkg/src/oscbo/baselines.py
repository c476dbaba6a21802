"""Per-round lengthscale policies: OSCBO and the comparison methods."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gp import (MLL_CONFIG, NOISE_VAR, Dataset, KernelSpec, cholesky_with_jitter,
                 kernel_matrix, mll_refit)
from .online import (DEFAULT_DOMAIN, FTPL_CONFIG, PhaseController, init_play,
                     init_recovery, recalibrate)
from .optim import OptimizerConfig, Rng, normal_cdf, normal_quantile

METHODS = ("oscbo", "oscbo-l1", "gp-ucb-mll", "ocbo", "a-gp-ucb", "fixed")


class InsufficientDataError(ValueError):
    pass


def agp_ucb_lengthscale(theta0, t: int, t0: int = 5, theta_min: float = 1e-4):
    g = 1.0 if t <= t0 else math.sqrt(t)
    return np.maximum(np.asarray(theta0, dtype=float) / g, theta_min)


def loo_predictive(data: Dataset, spec: KernelSpec, noise_var: float = NOISE_VAR):
    """Leave-one-out predictive means and observation-level variances.

    Uses the precision-matrix identity on ``K + noise_var*I`` instead of
    ``n`` refits.
    """
    return loo_arrays(data.X, data.y_std, spec, noise_var)


def loo_arrays(X, y, spec: KernelSpec, noise_var: float = NOISE_VAR):
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n < 2:
        raise InsufficientDataError("leave-one-out needs at least two observations")
    K = kernel_matrix(spec, X)
    K[np.diag_indices(n)] += noise_var
    L = cholesky_with_jitter(K)
    Linv = np.linalg.solve(L, np.eye(n))
    P = Linv.T @ Linv
    alpha = P @ y
    d = np.diag(P)
    return y - alpha / d, 1.0 / d


def ocbo_recalibrate(loo_mean, loo_var, y, delta: float = 0.1, min_size: int = 3):
    """Empirical ``1 - delta`` quantile of the leave-one-out PIT values.

    Returns ``(q, multiplier)`` with ``multiplier = Phi^-1(q)``; ``q`` is
    clamped into ``(0.5, 1)`` so the multiplier stays positive.
    """
    p = 1.0 - delta
    y = np.asarray(y, dtype=float)
    if y.size < min_size:
        return p, normal_quantile(p)
    u = np.sort(normal_cdf((y - np.asarray(loo_mean)) / np.sqrt(np.asarray(loo_var))))
    k = max(1, math.ceil(p * u.size - 1e-12))
    q = float(np.clip(u[k - 1], 0.5 + 1e-6, 1.0 - 1e-6))
    return q, normal_quantile(q)


@dataclass
class Policy:
    """Base lengthscale policy; subclasses override :meth:`next_theta`."""

    dim: int = 1
    domain: tuple = DEFAULT_DOMAIN
    kind: str = ""
    theta: np.ndarray | None = None

    def __post_init__(self):
        lo, hi = self.box()
        if self.theta is None:
            self.theta = np.sqrt(lo * hi)

    def box(self):
        lo = np.broadcast_to(np.asarray(self.domain[0], dtype=float), (self.dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.domain[1], dtype=float), (self.dim,)).copy()
        return lo, hi

    def next_theta(self, data: Dataset, t: int, rng: Rng) -> np.ndarray:
        return self.theta.copy()

    def ucb_beta(self, beta: float) -> float:
        return beta

    def observe(self, sharpness: float, calibration: float, beta: float):
        pass

    @property
    def lam(self) -> float:
        return math.nan

    @property
    def phase(self) -> str:
        return "na"


@dataclass
class FixedPolicy(Policy):
    kind: str = "fixed"


@dataclass
class MllPolicy(Policy):
    kind: str = "gp-ucb-mll"
    mll_cfg: OptimizerConfig = MLL_CONFIG

    def next_theta(self, data, t, rng):
        self.theta = mll_refit(data, self.box(), self.theta, self.mll_cfg)
        return self.theta.copy()


@dataclass
class OcboPolicy(MllPolicy):
    kind: str = "ocbo"
    delta: float = 0.1
    q: float = 0.9
    multiplier: float = field(default_factory=lambda: normal_quantile(0.9))

    def next_theta(self, data, t, rng):
        theta = super().next_theta(data, t, rng)
        if data.n >= 3:
            mu, var = loo_predictive(data, KernelSpec(theta))
            self.q, self.multiplier = ocbo_recalibrate(mu, var, data.y_std, self.delta)
        else:
            self.q, self.multiplier = ocbo_recalibrate([], [], [], self.delta)
        return theta

    def ucb_beta(self, beta):
        return self.multiplier**2


@dataclass
class AgpUcbPolicy(Policy):
    kind: str = "a-gp-ucb"
    t0: int = 5
    theta_min: float = 1e-4
    theta0: np.ndarray | None = None
    mll_cfg: OptimizerConfig = MLL_CONFIG

    def next_theta(self, data, t, rng):
        if self.theta0 is None:
            self.theta0 = mll_refit(data, self.box(), self.theta, self.mll_cfg)
        self.theta = agp_ucb_lengthscale(self.theta0, t, self.t0, self.theta_min)
        return self.theta.copy()


@dataclass
class OscboPolicy(Policy):
    kind: str = "oscbo"
    p: int = 2
    horizon: int = 100
    rho_hat: float = 0.5
    delta: float = 0.1
    c_p: float = 1.0
    c_d: float = 1.0
    kappa: float = 1.0
    literal: bool = False
    lam0: float = 1.0
    dual_step: float = 0.001
    oracle_cfg: OptimizerConfig = FTPL_CONFIG

    def __post_init__(self):
        super().__post_init__()
        self.ctrl = PhaseController(self.horizon, self.rho_hat, self.delta, self.c_p, self.c_d,
                                    self.kappa, self.literal)
        self.primal, self.dual = init_play(self.ctrl, self.dim, self.p, self.domain, self.lam0,
                                           self.dual_step, self.oracle_cfg)

    def next_theta(self, data, t, rng):
        _, reinit = self.ctrl.check(t)
        if reinit:
            self.primal, self.dual = init_recovery(self.dim, self.p, self.domain, self.lam0,
                                                   self.dual_step, self.oracle_cfg)
        self.theta = self.primal.next_element(data.X, data.y_std, rng)
        return self.theta.copy()

    def observe(self, sharpness, calibration, beta):
        recalibrate(self.primal, self.dual, sharpness, calibration, beta)
        self.ctrl.update(calibration)

    @property
    def lam(self):
        return self.dual.lam

    @property
    def phase(self):
        return self.ctrl.phase


def make_policy(method: str, dim: int, domain=DEFAULT_DOMAIN, **kw) -> Policy:
    """Build the policy for a CLI method name.

    Keyword arguments not used by the chosen policy are ignored.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method in ("oscbo", "oscbo-l1"):
        keys = ("horizon", "rho_hat", "delta", "c_p", "c_d", "kappa", "literal", "lam0",
                "dual_step", "oracle_cfg")
        args = {k: kw[k] for k in keys if k in kw}
        p = 1 if method == "oscbo-l1" else kw.get("p", 2)
        return OscboPolicy(dim=dim, domain=domain, kind=method, p=p, **args)
    if method == "gp-ucb-mll":
        return MllPolicy(dim=dim, domain=domain)
    if method == "ocbo":
        return OcboPolicy(dim=dim, domain=domain, delta=kw.get("delta", 0.1))
    if method == "a-gp-ucb":
        return AgpUcbPolicy(dim=dim, domain=domain)
    theta = kw.get("theta")
    return FixedPolicy(dim=dim, domain=domain,
                       theta=None if theta is None else np.broadcast_to(theta, (dim,)).astype(float))


def policy_next_theta(policy: Policy, data: Dataset, t: int, rng: Rng):
    return policy.next_theta(data, t, rng)

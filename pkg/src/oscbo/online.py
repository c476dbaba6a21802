"""Constrained online learning over kernel lengthscales.

The primal player is follow-the-perturbed-leader over the lengthscale box,
the dual player is mirror descent with the negative-entropy regularizer on
the Lagrange multiplier, and :class:`PhaseController` decides when to leave
the play phase for the recovery phase.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .gp import NOISE_VAR, CholeskyError, KernelSpec, cholesky_with_jitter, kernel_matrix
from .optim import OptimizerConfig, Rng, adam_minimize

log = logging.getLogger(__name__)

PLAY = "play"
RECOVERY = "recovery"

DEFAULT_DOMAIN = (0.01, 10.0)
FTPL_CONFIG = OptimizerConfig(lr=0.01, steps=50, space="log")
PERTURBATION_STD = 0.1


def rho_tilde(rho_hat: float, T: int) -> float:
    return max(rho_hat / 2.0, T ** -0.25)


def concentration_term(t: int, eta: float) -> float:
    return math.sqrt(8.0 * t * math.log(18.0 * t * t / eta))


def m_rho(rho_t: float, T: int, eta: float, c_p: float = 1.0, c_d: float = 1.0,
          kappa: float = 1.0) -> float:
    """Play-phase violation budget.

    The primal and dual regret bounds are instantiated as ``c_p*sqrt(T log T)``
    and ``c_d*sqrt(T)``; ``kappa`` scales the whole budget (``inf`` disables
    recovery, ``0`` switches as early as possible).
    """
    if math.isinf(kappa):
        return math.inf
    if kappa == 0:
        return 0.0
    sq = math.sqrt(T)
    budget = (
        (2.0 / rho_t) * sq
        + (2.0 + 3.0 / rho_t) * concentration_term(T, eta)
        + (1.0 + 2.0 / rho_t) * c_p * math.sqrt(T * math.log(T))
        + (1.0 / rho_t) * c_d * sq
    )
    return kappa * budget


def ftpl_objective(theta, X, y_std, lambdas, betas, noise_var=NOISE_VAR, p=2,
                   perturbation=None, n_context: int = 0, spec: KernelSpec | None = None) -> float:
    """Cumulative Lagrangian primal loss of ``theta`` minus the perturbation.

    The first ``n_context`` rows of ``X`` only condition the GP (initial
    design, or rounds from before a reinitialisation); each remaining row
    ``j`` contributes ``L_s_j(theta) + lambdas[j] * L_c_j(theta)``.  Both come
    from one Cholesky factor: ``2 log L_jj`` is the log predictive variance of
    row ``j`` given the earlier rows and ``(L^-1 y)_j`` its standardized
    residual.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    y = np.asarray(y_std, dtype=float).ravel()
    lam = np.asarray(lambdas, dtype=float).ravel()
    v = 1.0 / np.sqrt(np.asarray(betas, dtype=float).ravel())
    n = y.size
    h = n - n_context
    if h != lam.size or h != v.size:
        raise ValueError(f"history of length {lam.size} does not match {h} scored rows")
    spec = KernelSpec(theta) if spec is None else spec.with_lengthscale(theta)
    K = kernel_matrix(spec, X)
    K[np.diag_indices(n)] += noise_var
    L = cholesky_with_jitter(K)
    z = solve_triangular(L, y, lower=True)[n_context:]
    logdet = 2.0 * np.sum(np.log(np.diag(L)[n_context:]))
    value = (logdet - h * math.log(noise_var)) / math.log1p(1.0 / noise_var)
    value += lam @ np.abs(v * z) ** p - lam.sum()
    if perturbation is not None:
        value -= float(np.dot(perturbation, theta))
    return float(value)


@dataclass
class PrimalFtplState:
    domain: tuple = DEFAULT_DOMAIN
    dim: int = 1
    p: int = 2
    oracle_cfg: OptimizerConfig = FTPL_CONFIG
    utility_range: tuple = (-1.0, 1.0)
    noise_var: float = NOISE_VAR
    perturbation_std: float = PERTURBATION_STD
    lambda_history: list = field(default_factory=list)
    beta_history: list = field(default_factory=list)
    utility_history: list = field(default_factory=list)
    perturbation: np.ndarray | None = None
    current: np.ndarray | None = None

    def __post_init__(self):
        lo, hi = self.box()
        if np.any(lo <= 0) or np.any(lo > hi):
            raise ValueError(f"invalid lengthscale domain {self.domain}")
        if self.current is None:
            self.current = np.sqrt(lo * hi)

    def box(self):
        lo = np.broadcast_to(np.asarray(self.domain[0], dtype=float), (self.dim,)).copy()
        hi = np.broadcast_to(np.asarray(self.domain[1], dtype=float), (self.dim,)).copy()
        return lo, hi

    @property
    def rounds(self) -> int:
        return len(self.lambda_history)

    def next_element(self, X, y_std, rng: Rng, spec: KernelSpec | None = None) -> np.ndarray:
        """Draw a fresh perturbation and minimize the perturbed objective.

        ``X``/``y_std`` hold every observation so far; the last
        :attr:`rounds` rows are the ones this learner has been scored on.
        """
        lo, hi = self.box()
        self.perturbation = self.perturbation_std * rng.gaussian(self.dim)
        if self.rounds == 0:
            self.current = np.sqrt(lo * hi)
            return self.current.copy()
        n_context = len(y_std) - self.rounds
        lam = np.asarray(self.lambda_history)
        betas = np.asarray(self.beta_history)

        def objective(theta):
            try:
                return ftpl_objective(theta, X, y_std, lam, betas, self.noise_var, self.p,
                                      self.perturbation, n_context, spec)
            except CholeskyError:
                return np.inf

        start = np.clip(self.current, lo, hi)
        try:
            res = adam_minimize(objective, start, (lo, hi), self.oracle_cfg)
        except FloatingPointError:
            log.warning("FTPL oracle failed at the warm start; keeping previous lengthscale")
            return self.current.copy()
        self.current = res.x
        return self.current.copy()

    def observe(self, utility: float, lam: float, beta: float):
        self.utility_history.append(float(utility))
        self.lambda_history.append(float(lam))
        self.beta_history.append(float(beta))


def ftpl_next(state: PrimalFtplState, X, y_std, rng: Rng, spec: KernelSpec | None = None):
    return state.next_element(X, y_std, rng, spec)


@dataclass
class DualOmdState:
    lam: float = 1.0
    cap: float = 1.0
    step: float = 0.001

    def __post_init__(self):
        if not 0 < self.lam:
            raise ValueError("negative-entropy mirror descent needs a positive multiplier")
        self.lam = min(self.lam, self.cap)

    def observe(self, calibration: float) -> float:
        # gradient of the dual utility is -L_c
        self.lam = min(self.lam * math.exp(self.step * calibration), self.cap)
        return self.lam


def omd_observe(state: DualOmdState, calibration: float) -> float:
    return state.observe(calibration)


def recalibrate(primal: PrimalFtplState, dual: DualOmdState, sharpness: float,
                calibration: float, beta: float) -> float:
    """Feed one round of feedback to both players; returns the primal utility."""
    lam = dual.lam
    utility = sharpness + lam * calibration
    primal.observe(utility, lam, beta)
    dual.observe(calibration)
    return utility


def violation_update(V: float, calibration: float) -> float:
    return V + calibration


@dataclass
class PhaseController:
    horizon: int
    rho_hat: float = 0.5
    delta: float = 0.1
    c_p: float = 1.0
    c_d: float = 1.0
    kappa: float = 1.0
    literal: bool = False
    phase: str = PLAY
    violation: float = 0.0
    switched: bool = False

    def __post_init__(self):
        if not 0 < self.rho_hat <= 1:
            raise ValueError("rho_hat must lie in (0, 1]")
        self.eta = self.delta / 3.0
        self.rho_tilde = rho_tilde(self.rho_hat, self.horizon)
        self.budget = m_rho(self.rho_tilde, self.horizon, self.eta, self.c_p, self.c_d, self.kappa)

    def threshold(self, t: int) -> float:
        return (self.horizon - t) * self.rho_tilde + self.budget - 1.0

    def check(self, t: int):
        """Return ``(phase, reinit)`` for round ``t``.

        The switch is latched: after the first trigger the controller stays in
        recovery and, unless ``literal`` is set, never asks for another reset.
        """
        if self.switched and not self.literal:
            return self.phase, False
        if self.violation > self.threshold(t):
            self.phase, self.switched = RECOVERY, True
            return self.phase, True
        return self.phase, False

    def update(self, calibration: float) -> float:
        self.violation = violation_update(self.violation, calibration)
        return self.violation


def phase_check(ctrl: PhaseController, t: int):
    return ctrl.check(t)


def init_play(ctrl: PhaseController, dim: int, p: int, domain=DEFAULT_DOMAIN, lam0: float = 1.0,
              dual_step: float = 0.001, oracle_cfg: OptimizerConfig = FTPL_CONFIG):
    r = ctrl.rho_tilde
    primal = PrimalFtplState(domain, dim, p, oracle_cfg, (-1.0 / r, 1.0 + 1.0 / r))
    dual = DualOmdState(lam0, 1.0 / r, dual_step)
    return primal, dual


def init_recovery(dim: int, p: int, domain=DEFAULT_DOMAIN, lam0: float = 1.0,
                  dual_step: float = 0.001, oracle_cfg: OptimizerConfig = FTPL_CONFIG):
    primal = PrimalFtplState(domain, dim, p, oracle_cfg, (-1.0, 1.0))
    dual = DualOmdState(lam0, 1.0, dual_step)
    return primal, dual

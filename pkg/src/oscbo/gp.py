"""Exact GP regression with half-integer Matern kernels.

All GP quantities live in unit-cube input space and standardized output
space; see :func:`fit_transforms`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .optim import OptimizerConfig, adam_minimize, finite_diff_grad

log = logging.getLogger(__name__)

NOISE_VAR = 0.01
JITTERS = (0.0, 1e-10, 1e-8, 1e-6)
STD_FLOOR = 1e-8


class InvalidKernelError(ValueError):
    pass


class CholeskyError(np.linalg.LinAlgError):
    def __init__(self, jitters):
        super().__init__(f"Cholesky failed after jitter levels {list(jitters)}")
        self.jitters = tuple(jitters)


@dataclass(frozen=True)
class KernelSpec:
    lengthscale: np.ndarray
    nu: float = 2.5
    output_scale: float = 1.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        object.__setattr__(self, "lengthscale", ls)
        if ls.ndim != 1 or ls.size == 0 or not np.all(ls > 0) or not np.all(np.isfinite(ls)):
            raise InvalidKernelError(f"lengthscale must be positive and finite, got {ls}")
        if self.nu not in (0.5, 1.5, 2.5):
            raise InvalidKernelError(f"only nu in {{1/2, 3/2, 5/2}} is supported, got {self.nu}")
        if not self.output_scale > 0:
            raise InvalidKernelError("output_scale must be positive")

    def with_lengthscale(self, lengthscale) -> "KernelSpec":
        return KernelSpec(lengthscale, self.nu, self.output_scale)


def matern_profile(r, nu):
    r = np.asarray(r, dtype=float)
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        s = np.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    s = np.sqrt(5.0) * r
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def _scaled(spec: KernelSpec, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ls = spec.lengthscale
    if ls.size not in (1, X.shape[1]):
        raise InvalidKernelError(f"lengthscale of size {ls.size} does not match dimension {X.shape[1]}")
    return X / ls


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape:
        raise ValueError("points must have matching dimension")
    a, b = _scaled(spec, x[None]), _scaled(spec, x2[None])
    r = np.sqrt(np.sum((a - b) ** 2))
    return float(spec.output_scale * matern_profile(r, spec.nu))


def kernel_matrix(spec: KernelSpec, X, X2=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, spec.lengthscale.size if X.size else 1)
    if X.shape[0] == 0 and X2 is None:
        return np.zeros((0, 0))
    A = _scaled(spec, X) if X.shape[0] else np.zeros((0, X.shape[1]))
    B = A if X2 is None else _scaled(spec, X2)
    diff = A[:, None, :] - B[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    r = np.sqrt(np.maximum(sq, 0.0))
    K = spec.output_scale * matern_profile(r, spec.nu)
    if X2 is None:
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, spec.output_scale)
    return K


@dataclass
class Dataset:
    """Observations in unit-cube inputs with standardized outputs.

    Append-only in spirit: :meth:`append` returns a fresh snapshot with the
    standardization refit on all data.
    """

    X: np.ndarray
    y_raw: np.ndarray
    y_std: np.ndarray
    out_mean: float
    out_std: float
    bounds: np.ndarray
    degenerate: bool = False
    standardize: bool = True

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def to_unit(self, raw_x):
        return normalize(raw_x, self.bounds)

    def to_raw(self, unit_x):
        return denormalize(unit_x, self.bounds)

    def standardize_y(self, y):
        return (np.asarray(y, dtype=float) - self.out_mean) / self.out_std

    def destandardize_y(self, y_std):
        return np.asarray(y_std, dtype=float) * self.out_std + self.out_mean

    def raw_X(self):
        return self.to_raw(self.X)

    def append(self, raw_x, y) -> "Dataset":
        raw_X = np.vstack([self.raw_X(), np.atleast_2d(raw_x)])
        y_raw = np.append(self.y_raw, y)
        return fit_transforms(raw_X, y_raw, self.bounds, standardize=self.standardize)


def normalize(raw_x, bounds):
    bounds = np.asarray(bounds, dtype=float)
    return (np.asarray(raw_x, dtype=float) - bounds[:, 0]) / (bounds[:, 1] - bounds[:, 0])


def denormalize(unit_x, bounds):
    bounds = np.asarray(bounds, dtype=float)
    return bounds[:, 0] + np.asarray(unit_x, dtype=float) * (bounds[:, 1] - bounds[:, 0])


def fit_transforms(raw_X, raw_y, bounds, standardize: bool = True) -> Dataset:
    """Normalize inputs to the unit cube and standardize outputs.

    ``standardize=False`` keeps outputs in raw units (identity transform),
    which the fixed-kernel coverage experiments rely on.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("bounds need lower < upper in every dimension")
    raw_X = np.asarray(raw_X, dtype=float).reshape(-1, bounds.shape[0])
    raw_y = np.asarray(raw_y, dtype=float).ravel()
    if raw_X.shape[0] != raw_y.size:
        raise ValueError("X and y lengths differ")
    X = normalize(raw_X, bounds)
    degenerate = False
    if not standardize:
        mean, std = 0.0, 1.0
    elif raw_y.size <= 1:
        mean = float(raw_y.mean()) if raw_y.size else 0.0
        std, degenerate = 1.0, True
    else:
        mean = float(raw_y.mean())
        std = float(raw_y.std(ddof=1))
        if std < STD_FLOOR:
            std, degenerate = STD_FLOOR, True
    y_std = (raw_y - mean) / std
    return Dataset(X, raw_y, y_std, mean, std, bounds, degenerate, standardize)


def cholesky_with_jitter(A) -> np.ndarray:
    n = A.shape[0]
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(A + jitter * np.eye(n) if jitter else A)
        except np.linalg.LinAlgError:
            continue
    raise CholeskyError(JITTERS)


@dataclass(frozen=True)
class GpPosterior:
    kernel: KernelSpec
    noise_var: float
    chol: np.ndarray
    weights: np.ndarray
    X: np.ndarray
    y: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def gp_fit(data: Dataset, spec: KernelSpec, noise_var: float = NOISE_VAR) -> GpPosterior:
    return fit_arrays(data.X, data.y_std, spec, noise_var)


def fit_arrays(X, y, spec: KernelSpec, noise_var: float = NOISE_VAR) -> GpPosterior:
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n == 0:
        d = X.shape[1] if X.ndim == 2 else spec.lengthscale.size
        return GpPosterior(spec, noise_var, np.zeros((0, 0)), np.zeros(0), np.zeros((0, d)), y)
    K = kernel_matrix(spec, X)
    K[np.diag_indices(n)] += noise_var
    L = cholesky_with_jitter(K)
    z = solve_triangular(L, y, lower=True)
    w = solve_triangular(L.T, z, lower=False)
    return GpPosterior(spec, noise_var, L, w, X, y)


def predict(post: GpPosterior, Xs):
    """Posterior mean and latent variance at the rows of ``Xs``."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    s2 = post.kernel.output_scale
    if post.n == 0:
        return np.zeros(Xs.shape[0]), np.full(Xs.shape[0], s2)
    Ks = kernel_matrix(post.kernel, post.X, Xs)
    mean = Ks.T @ post.weights
    V = solve_triangular(post.chol, Ks, lower=True)
    var = s2 - np.sum(V * V, axis=0)
    return mean, np.clip(var, 0.0, s2)


def gp_predict(post: GpPosterior, x):
    mean, var = predict(post, np.asarray(x, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


def log_marginal_likelihood(data: Dataset, spec: KernelSpec, noise_var: float = NOISE_VAR) -> float:
    return lml_arrays(data.X, data.y_std, spec, noise_var)


def lml_arrays(X, y, spec: KernelSpec, noise_var: float = NOISE_VAR) -> float:
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n == 0:
        return 0.0
    post = fit_arrays(X, y, spec, noise_var)
    return float(
        -0.5 * (y @ post.weights + 2.0 * np.sum(np.log(np.diag(post.chol))) + n * np.log(2 * np.pi))
    )


def mll_gradient(data: Dataset, spec: KernelSpec, noise_var: float = NOISE_VAR, h: float = 1e-5):
    """Central-difference gradient of the log marginal likelihood with respect
    to the log-lengthscales."""

    def f(u):
        try:
            return log_marginal_likelihood(data, spec.with_lengthscale(np.exp(u)), noise_var)
        except CholeskyError:
            return np.nan

    return finite_diff_grad(f, np.log(spec.lengthscale), h)


MLL_CONFIG = OptimizerConfig(lr=0.01, steps=50, space="log")


def mll_refit(data: Dataset, domain, init, cfg: OptimizerConfig = MLL_CONFIG,
              spec: KernelSpec | None = None, noise_var: float = NOISE_VAR) -> np.ndarray:
    """Maximize the log marginal likelihood over the lengthscale box.

    ``domain`` is ``(lower, upper)``; ``init`` the starting lengthscale.
    Iterates whose Cholesky fails are skipped.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in domain)
    if np.any(lo <= 0):
        raise ValueError("lengthscale domain must be bounded away from zero")
    init = np.clip(np.atleast_1d(np.asarray(init, dtype=float)), lo, hi)
    base = spec if spec is not None else KernelSpec(init)
    if cfg.steps == 0 or data.n == 0:
        return init.copy()

    def neg_mll(theta):
        try:
            return -log_marginal_likelihood(data, base.with_lengthscale(theta), noise_var)
        except CholeskyError:
            return np.inf

    box = (np.broadcast_to(lo, init.shape), np.broadcast_to(hi, init.shape))
    res = adam_minimize(neg_mll, init, box, replace(cfg, space="log"))
    if res.skipped:
        log.info("mll_refit skipped %d iterates after Cholesky failures", res.skipped)
    return res.x

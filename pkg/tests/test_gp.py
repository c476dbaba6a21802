import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special
from scipy.optimize import minimize_scalar

from oscbo.gp import (NOISE_VAR, CholeskyError, InvalidKernelError, KernelSpec,
                      cholesky_with_jitter, denormalize, fit_arrays, fit_transforms, gp_fit,
                      gp_predict, kernel_eval, kernel_matrix, lml_arrays,
                      log_marginal_likelihood, mll_gradient, mll_refit, normalize, predict)
from oscbo.optim import OptimizerConfig


def bessel_matern(r, nu):
    """General-nu Matern via the modified Bessel function (independent of the
    closed forms used by the package)."""
    if r == 0:
        return 1.0
    a = math.sqrt(2 * nu) * r
    return 2 ** (1 - nu) / special.gamma(nu) * a**nu * special.kv(nu, a)


def naive_posterior(X, y, Xs, spec, noise_var):
    K = np.array([[kernel_eval(spec, a, b) for b in X] for a in X])
    Ks = np.array([[kernel_eval(spec, a, b) for b in Xs] for a in X])
    Kinv = np.linalg.inv(K + noise_var * np.eye(len(X)))
    mean = Ks.T @ Kinv @ y
    var = spec.output_scale - np.einsum("ij,ik,kj->j", Ks, Kinv, Ks)
    return mean, var


def random_instance(rng, n, d, ard=False):
    X = rng.uniform(size=(n, d))
    y = rng.standard_normal(n)
    ls = rng.uniform(0.1, 1.5, size=d if ard else 1)
    return X, y, KernelSpec(ls, nu=float(rng.choice([0.5, 1.5, 2.5])))


# --- kernel ----------------------------------------------------------------

def test_kernel_examples():
    spec = KernelSpec(1.0)
    assert kernel_eval(spec, [0.3], [0.3]) == 1.0
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(
        (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5)), abs=1e-15)
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(0.523994, abs=1e-6)
    assert kernel_eval(KernelSpec(1.0, nu=0.5), [0.0], [1.0]) == pytest.approx(math.exp(-1))


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
@given(r=st.just(0.0) | st.floats(1e-6, 6.0))
def test_kernel_matches_bessel_form(nu, r):
    k = kernel_eval(KernelSpec(1.0, nu=nu), [0.0], [r])
    assert k == pytest.approx(bessel_matern(r, nu), rel=1e-10, abs=1e-14)


def test_ard_scaling(rng):
    spec = KernelSpec([0.5, 2.0])
    x, x2 = np.array([0.1, 0.2]), np.array([0.4, 0.9])
    r = math.sqrt(((x - x2)[0] / 0.5) ** 2 + ((x - x2)[1] / 2.0) ** 2)
    assert kernel_eval(spec, x, x2) == pytest.approx(bessel_matern(r, 2.5), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, [1.0, 0.0]])
def test_invalid_lengthscale(bad):
    with pytest.raises(InvalidKernelError):
        KernelSpec(bad)


def test_invalid_nu():
    with pytest.raises(InvalidKernelError):
        KernelSpec(1.0, nu=2.0)


def test_kernel_matrix_small_cases():
    spec = KernelSpec(0.4)
    assert kernel_matrix(spec, np.zeros((0, 2))).shape == (0, 0)
    assert kernel_matrix(spec, np.array([[0.2, 0.3]])).tolist() == [[1.0]]
    assert np.array_equal(kernel_matrix(spec, np.array([[0.2, 0.3], [0.2, 0.3]])), np.ones((2, 2)))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12), d=st.integers(1, 4))
def test_kernel_matrix_entries(seed, n, d):
    rng = np.random.default_rng(seed)
    X, _, spec = random_instance(rng, n, d, ard=bool(seed % 2))
    K = kernel_matrix(spec, X)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    assert np.all(K <= 1.0)
    ref = np.array([[kernel_eval(spec, a, b) for b in X] for a in X])
    assert np.allclose(K, ref, atol=1e-14)


# --- transforms ----------------------------------------------------------------

def test_transform_examples():
    d = fit_transforms([[0.0], [5.0]], [0.0, 2.0], [[-10.0, 10.0]])
    assert d.X[0, 0] == 0.5
    assert d.out_mean == 1.0
    assert d.out_std == pytest.approx(math.sqrt(2))
    assert np.allclose(d.y_std, [-1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_constant_outputs_floor():
    d = fit_transforms([[0.1], [0.2], [0.3]], [4.0, 4.0, 4.0], [[0.0, 1.0]])
    assert d.out_std == 1e-8 and d.degenerate
    assert np.all(d.y_std == 0.0)


def test_single_point_degenerate():
    d = fit_transforms([[0.1]], [3.0], [[0.0, 1.0]])
    assert d.degenerate and d.out_std == 1.0 and d.out_mean == 3.0


def test_bad_bounds():
    with pytest.raises(ValueError):
        fit_transforms([[0.1]], [3.0], [[1.0, 1.0]])


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 20))
def test_transform_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-100, 100, 3)
    bounds = np.column_stack([lo, lo + rng.uniform(0.1, 50, 3)])
    raw = bounds[:, 0] + rng.uniform(size=(n, 3)) * np.ptp(bounds, axis=1)
    y = rng.normal(50, 20, n)
    d = fit_transforms(raw, y, bounds)
    assert np.all((d.X >= 0) & (d.X <= 1))
    assert np.allclose(denormalize(normalize(raw, bounds), bounds), raw, rtol=1e-12, atol=0)
    assert np.allclose(d.destandardize_y(d.y_std), y, rtol=1e-12)


def test_append_refits():
    d = fit_transforms([[0.1], [0.5]], [1.0, 3.0], [[0.0, 1.0]])
    d2 = d.append([0.9], 5.0)
    assert d2.n == 3 and d2.out_mean == 3.0 and d2.out_std == 2.0


# --- posterior -------------------------------------------------------------------

def test_fit_one_point():
    d = fit_transforms([[0.5]], [1.0], [[0.0, 1.0]], standardize=False)
    post = gp_fit(d, KernelSpec(0.3), 0.01)
    assert post.weights[0] == pytest.approx(1 / 1.01)
    mean, var = gp_predict(post, [0.5])
    assert mean == pytest.approx(0.990099, abs=1e-6)
    assert var == pytest.approx(0.01 / 1.01, abs=1e-12)


def test_empty_posterior_is_prior():
    post = fit_arrays(np.zeros((0, 2)), np.zeros(0), KernelSpec(0.3))
    assert gp_predict(post, [0.2, 0.7]) == (0.0, 1.0)


def test_weights_solve_system(rng):
    X, y, spec = random_instance(rng, 15, 3)
    post = fit_arrays(X, y, spec, NOISE_VAR)
    A = kernel_matrix(spec, X) + NOISE_VAR * np.eye(15)
    assert np.allclose(A @ post.weights, y, atol=1e-10)
    assert np.allclose(post.chol @ post.chol.T, A, atol=1e-10)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), d=st.integers(1, 5))
def test_posterior_matches_dense_inverse(seed, n, d):
    rng = np.random.default_rng(seed)
    X, y, spec = random_instance(rng, n, d, ard=bool(seed % 2))
    Xs = rng.uniform(size=(5, d))
    post = fit_arrays(X, y, spec, NOISE_VAR)
    mean, var = predict(post, Xs)
    ref_mean, ref_var = naive_posterior(X, y, Xs, spec, NOISE_VAR)
    assert np.allclose(mean, ref_mean, atol=1e-8)
    assert np.allclose(var, np.clip(ref_var, 0, 1), atol=1e-8)
    assert np.all((var >= 0) & (var <= 1))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 15))
def test_variance_monotone_in_data(seed, n):
    rng = np.random.default_rng(seed)
    X, y, spec = random_instance(rng, n + 1, 2)
    Xs = rng.uniform(size=(8, 2))
    _, v_small = predict(fit_arrays(X[:n], y[:n], spec), Xs)
    _, v_big = predict(fit_arrays(X, y, spec), Xs)
    assert np.all(v_big <= v_small + 1e-10)


def test_interpolation_limit(rng):
    X = rng.uniform(size=(8, 2))
    y = rng.standard_normal(8)
    post = fit_arrays(X, y, KernelSpec(0.3), 1e-10)
    mean, _ = predict(post, X)
    assert np.max(np.abs(mean - y)) <= 1e-4


def test_cholesky_failure_reports_jitters():
    with pytest.raises(CholeskyError) as err:
        cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert err.value.jitters == (0.0, 1e-10, 1e-8, 1e-6)


def test_cholesky_jitter_rescues_duplicates():
    K = np.ones((3, 3))
    L = cholesky_with_jitter(K)
    assert np.allclose(L @ L.T, K, atol=1e-5)


# --- marginal likelihood -------------------------------------------------------

def test_lml_examples():
    assert lml_arrays(np.zeros((0, 1)), np.zeros(0), KernelSpec(1.0)) == 0.0
    v = lml_arrays(np.array([[0.5]]), np.array([1.0]), KernelSpec(1.0), 0.01)
    assert v == pytest.approx(-0.5 * (1 / 1.01 + math.log(1.01) + math.log(2 * math.pi)), abs=1e-12)
    assert v == pytest.approx(-1.418963, abs=1e-6)


def test_lml_dense_oracle(rng):
    X, y, spec = random_instance(rng, 8, 2)
    A = kernel_matrix(spec, X) + NOISE_VAR * np.eye(8)
    _, logdet = np.linalg.slogdet(A)
    ref = -0.5 * (y @ np.linalg.inv(A) @ y + logdet + 8 * math.log(2 * math.pi))
    assert lml_arrays(X, y, spec) == pytest.approx(ref, abs=1e-9)


def analytic_mll_grad(X, y, ls, noise_var):
    """Exact gradient of the Matern-5/2 MLL with respect to log-lengthscales."""
    n, d = X.shape
    ls = np.broadcast_to(ls, (d,))
    diff2 = (X[:, None, :] - X[None, :, :]) ** 2 / ls**2
    s = np.sqrt(5.0 * diff2.sum(-1))
    A = (1 + s + s * s / 3) * np.exp(-s) + noise_var * np.eye(n)
    Ainv = np.linalg.inv(A)
    alpha = Ainv @ y
    W = np.outer(alpha, alpha) - Ainv
    common = (5.0 / 3.0) * (1 + s) * np.exp(-s)
    grads = [0.5 * np.sum(W * common * diff2[:, :, j]) for j in range(d)]
    return np.array(grads)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 20))
def test_mll_gradient_vs_analytic(seed, n):
    rng = np.random.default_rng(seed)
    ard = bool(seed % 2)
    X = rng.uniform(size=(n, 2))
    y = rng.standard_normal(n)
    ls = rng.uniform(0.2, 1.0, 2 if ard else 1)
    d = fit_transforms(X, y, [[0, 1], [0, 1]], standardize=False)
    g = mll_gradient(d, KernelSpec(ls), NOISE_VAR)
    ref = analytic_mll_grad(X, y, ls, NOISE_VAR)
    if not ard:
        ref = ref.sum(keepdims=True)
    assert np.allclose(g, ref, rtol=1e-4, atol=1e-6 * (1 + np.abs(ref).max()))


def gp_draw(rng, X, ls, noise_var):
    K = kernel_matrix(KernelSpec(ls), X) + 1e-10 * np.eye(len(X))
    return np.linalg.cholesky(K) @ rng.standard_normal(len(X)) + math.sqrt(noise_var) * rng.standard_normal(len(X))


def test_mll_refit_recovers_lengthscale():
    # refit agrees with a dense-grid MLL argmax on every draw; the draws
    # themselves land near the true 0.3 most of the time
    grid = np.exp(np.linspace(np.log(0.01), np.log(10), 600))
    cfg = OptimizerConfig(lr=0.05, steps=300, space="log")
    inside = 0
    for seed in range(8):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(40, 1))
        d = fit_transforms(X, gp_draw(rng, X, 0.3, NOISE_VAR), [[0.0, 1.0]], standardize=False)
        theta = mll_refit(d, (0.01, 10.0), 1.0, cfg)[0]
        best = grid[np.argmax([log_marginal_likelihood(d, KernelSpec(g)) for g in grid])]
        assert theta == pytest.approx(best, rel=0.015)
        inside += 0.15 <= theta <= 0.6
    assert inside >= 6


def test_mll_refit_stationary_point():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(20, 1))
    d = fit_transforms(X, gp_draw(rng, X, 0.2, NOISE_VAR), [[0.0, 1.0]], standardize=False)
    res = minimize_scalar(lambda u: -log_marginal_likelihood(d, KernelSpec(math.exp(u))),
                          bounds=(math.log(0.05), math.log(2.0)), method="bounded",
                          options={"xatol": 1e-10})
    theta = mll_refit(d, (0.01, 10.0), math.exp(res.x))
    assert abs(log_marginal_likelihood(d, KernelSpec(theta)) + res.fun) <= 1e-6


def test_mll_refit_zero_steps_and_box():
    d = fit_transforms([[0.1], [0.4], [0.9]], [0.0, 1.0, 0.5], [[0.0, 1.0]])
    assert mll_refit(d, (0.01, 10.0), 0.7, OptimizerConfig(steps=0)).tolist() == [0.7]
    theta = mll_refit(d, (0.5, 0.6), 0.55)
    assert 0.5 <= theta[0] <= 0.6
    with pytest.raises(ValueError):
        mll_refit(d, (0.0, 1.0), 0.5)

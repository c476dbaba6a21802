import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscbo.acquisition import (AcquisitionConfig, AcquisitionSpec, acquisition_batch,
                               logei_value, maximize, maximize_acquisition, ucb_value)
from oscbo.gp import KernelSpec, fit_arrays, fit_transforms, gp_fit
from oscbo.optim import Rng

mpmath.mp.dps = 200


def logei_reference(mean, var, best):
    s = mpmath.sqrt(mpmath.mpf(var))
    z = (mpmath.mpf(mean) - best) / s
    h = z * mpmath.ncdf(z) + mpmath.npdf(z)
    return float(mpmath.log(s * h))


def test_ucb_examples():
    assert ucb_value(0.3, 0.5, 0.0) == 0.3
    assert ucb_value(0.5, 0.04, 2.0) == pytest.approx(0.782843, abs=1e-6)
    assert ucb_value(0.0, 0.5, 1.0) > ucb_value(0.0, 0.4, 1.0)


def test_logei_examples():
    assert logei_value(0.0, 1.0, 0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    assert logei_value(1.0, 0.0, 0.0) == 0.0
    assert logei_value(-1.0, 0.0, 0.0) == -math.inf
    assert logei_value(-10.0, 1.0, 0.0) == pytest.approx(logei_reference(-10.0, 1.0, 0.0), rel=1e-10)


@given(z=st.floats(-1e4, 30), var=st.floats(1e-6, 4.0))
def test_logei_matches_high_precision(z, var):
    mean = z * math.sqrt(var)
    ref = logei_reference(mean, var, 0.0)
    assert logei_value(mean, var, 0.0) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_logei_vectorized():
    v = logei_value(np.array([0.0, -40.0, 2.0]), np.array([1.0, 1.0, 0.0]), 0.5)
    assert v.shape == (3,) and np.all(np.isfinite(v))


def test_spec_validation():
    with pytest.raises(ValueError):
        AcquisitionSpec("logei")
    with pytest.raises(ValueError):
        AcquisitionSpec("pi")
    with pytest.raises(ValueError):
        AcquisitionConfig(raw=3, restarts=5)


def test_empty_posterior_ucb_value():
    post = fit_arrays(np.zeros((0, 2)), np.zeros(0), KernelSpec(0.3))
    x, v = maximize_acquisition(post, AcquisitionSpec("ucb", 2.0), 2, Rng(0))
    assert v == pytest.approx(math.sqrt(2.0))
    assert np.all((x >= 0) & (x <= 1))


def test_far_from_bad_observation():
    post = fit_arrays(np.array([[0.5]]), np.array([-2.0]), KernelSpec(0.1))
    spec = AcquisitionSpec("ucb", 2.0)
    x, v = maximize_acquisition(post, spec, 1, Rng(1))
    assert abs(x[0] - 0.5) > 0.2
    assert v >= acquisition_batch(post, spec)(np.array([[0.5]]))[0]


def best_raw(fn, d, seed, cfg):
    raw = Rng(seed).uniform((cfg.raw, d))
    return np.max(fn(raw))


@given(seed=st.integers(0, 2**32 - 1))
def test_never_below_raw_samples(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(6, 2))
    post = fit_arrays(X, rng.standard_normal(6), KernelSpec(0.2))
    spec = AcquisitionSpec("ucb", 2.0)
    cfg = AcquisitionConfig(steps=10)
    fn = acquisition_batch(post, spec)
    x, v = maximize(fn, 2, Rng(seed), cfg)
    assert v >= best_raw(fn, 2, seed, cfg)
    assert v == pytest.approx(fn(x[None])[0], rel=1e-12)
    assert np.all((x >= 0) & (x <= 1))


def test_refinement_improves_smooth_objective():
    fn = lambda X: -np.sum((X - 0.37) ** 2, axis=1)  # noqa: E731
    cfg = AcquisitionConfig(steps=200)
    x, v = maximize(fn, 3, Rng(5), cfg)
    assert np.allclose(x, 0.37, atol=1e-2)
    assert v > best_raw(fn, 3, 5, cfg)


def test_deterministic():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(5, 3))
    post = fit_arrays(X, rng.standard_normal(5), KernelSpec(0.3))
    spec = AcquisitionSpec("logei", best=0.5)
    a = maximize_acquisition(post, spec, 3, Rng(9))
    b = maximize_acquisition(post, spec, 3, Rng(9))
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]


def test_ties_pick_lowest_index():
    calls = []

    def flat(X):
        calls.append(X.copy())
        return np.zeros(len(X))

    x, v = maximize(flat, 2, Rng(3), AcquisitionConfig(steps=0))
    assert np.array_equal(x, calls[0][0])


def test_non_finite_landscape():
    x, v = maximize(lambda X: np.full(len(X), -np.inf), 2, Rng(0), AcquisitionConfig(steps=3))
    assert v == -np.inf and x.shape == (2,)


def test_ucb_argmax_shift_invariant(rng):
    raw_X = rng.uniform(size=(8, 2))
    y = np.sin(5 * raw_X[:, 0]) + raw_X[:, 1]
    cands = rng.uniform(size=(200, 2))
    bounds = [[0, 1], [0, 1]]
    spec = AcquisitionSpec("ucb", 2.0)
    a = acquisition_batch(gp_fit(fit_transforms(raw_X, y, bounds), KernelSpec(0.3)), spec)(cands)
    b = acquisition_batch(gp_fit(fit_transforms(raw_X, y + 123.0, bounds), KernelSpec(0.3)), spec)(cands)
    assert np.argmax(a) == np.argmax(b)

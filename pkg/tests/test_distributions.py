import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from myoe.autodiff import Tensor, grad_check
from myoe.distributions import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    DiagGaussian,
    entropy_diag_gaussian,
    kl_diag_gaussian,
    reparameterized_sample,
    softmax,
)

HALF_LN_2PI_E = 0.5 * math.log(2 * math.pi * math.e)


# -- KL divergence --------------------------------------------------------


def test_kl_identity_is_zero():
    q = DiagGaussian(np.zeros(2), np.zeros(2))
    assert float(kl_diag_gaussian(q, q).data) == 0.0


def test_kl_unit_shift_closed_form():
    # d=1, q = N(1, 1), p = N(0, 1): 0.5 * (mu^2 + s^2 - 1 - ln s^2) = 0.5
    q = DiagGaussian(np.array([1.0]), np.array([0.0]))
    p = DiagGaussian(np.array([0.0]), np.array([0.0]))
    assert float(kl_diag_gaussian(q, p).data) == pytest.approx(0.5, abs=1e-12)


def test_kl_matches_monte_carlo_oracle():
    rng = np.random.default_rng(42)
    mq, mp = rng.normal(size=4), rng.normal(size=4)
    lq, lp = rng.uniform(-0.5, 0.5, 4), rng.uniform(-0.5, 0.5, 4)
    q = DiagGaussian(mq, lq)
    p = DiagGaussian(mp, lp)
    x = mq + np.exp(lq) * rng.standard_normal((1_000_000, 4))

    def logpdf(x, mean, log_std):
        z = (x - mean) / np.exp(log_std)
        return (-0.5 * np.log(2 * np.pi) - log_std - 0.5 * z**2).sum(axis=-1)

    mc = float(np.mean(logpdf(x, mq, lq) - logpdf(x, mp, lp)))
    assert float(kl_diag_gaussian(q, p).data) == pytest.approx(mc, abs=1e-2)


def test_kl_dimension_mismatch_raises():
    q = DiagGaussian(np.zeros(2), np.zeros(2))
    p = DiagGaussian(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        kl_diag_gaussian(q, p)


@settings(max_examples=200, deadline=None)
@given(
    d=st.integers(1, 6),
    seed=st.integers(0, 2**31 - 1),
)
def test_kl_nonnegative_property(d, seed):
    rng = np.random.default_rng(seed)
    q = DiagGaussian(rng.normal(size=d) * 3, rng.uniform(-2, 2, d))
    p = DiagGaussian(rng.normal(size=d) * 3, rng.uniform(-2, 2, d))
    assert float(kl_diag_gaussian(q, p).data) >= 0.0
    assert float(kl_diag_gaussian(q, q).data) == 0.0


# -- entropy ---------------------------------------------------------------


def test_entropy_unit_gaussian():
    d = DiagGaussian(np.array([0.0]), np.array([0.0]))
    assert float(entropy_diag_gaussian(d).data) == pytest.approx(1.41894, abs=1e-5)


def test_entropy_additive_over_dims():
    d = DiagGaussian(np.zeros(3), np.zeros(3))
    assert float(entropy_diag_gaussian(d).data) == pytest.approx(3 * HALF_LN_2PI_E)


def test_entropy_log_two_case():
    d = DiagGaussian(np.array([0.0]), np.array([math.log(2.0)]))
    assert float(entropy_diag_gaussian(d).data) == pytest.approx(
        HALF_LN_2PI_E + math.log(2.0)
    )


def test_entropy_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(3)
    for _ in range(50):
        dim = int(rng.integers(1, 5))
        mean = rng.normal(size=dim)
        log_std = rng.uniform(-1, 1, dim)
        ours = float(entropy_diag_gaussian(DiagGaussian(mean, log_std)).data)
        ref = scipy_stats.multivariate_normal(mean, np.diag(np.exp(2 * log_std))).entropy()
        assert ours == pytest.approx(ref, abs=1e-9)


def test_entropy_matches_monte_carlo():
    rng = np.random.default_rng(5)
    mean = rng.normal(size=3)
    log_std = rng.uniform(-0.5, 0.5, 3)
    d = DiagGaussian(mean, log_std)
    x = mean + np.exp(log_std) * rng.standard_normal((1_000_000, 3))
    z = (x - mean) / np.exp(log_std)
    logp = (-0.5 * np.log(2 * np.pi) - log_std - 0.5 * z**2).sum(axis=-1)
    assert float(entropy_diag_gaussian(d).data) == pytest.approx(-logp.mean(), abs=1e-2)


# -- softmax ----------------------------------------------------------------


def test_softmax_uniform():
    assert np.allclose(softmax(np.zeros(3)).data, [1 / 3] * 3, atol=1e-12)


def test_softmax_log_two():
    out = softmax(np.array([math.log(2.0), 0.0])).data
    assert out == pytest.approx([2 / 3, 1 / 3], abs=1e-12)


@pytest.mark.parametrize("c", [1.0, 2.0, 0.5])
def test_softmax_shift_invariance_exact(c):
    base = np.array([5.0, 5.0 + c, 5.0])
    shifted = np.array([0.0, c, 0.0])
    assert np.array_equal(softmax(base).data, softmax(shifted).data)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 10))
def test_softmax_simplex_property(seed, n):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n) * 10
    w = softmax(z).data
    assert np.all(w > 0)
    assert abs(w.sum() - 1.0) < 1e-9


def test_softmax_empty_rejected():
    with pytest.raises(ValueError):
        softmax(np.array([]))


def test_softmax_nonfinite_rejected():
    with pytest.raises(ValueError):
        softmax(np.array([np.inf, 0.0]))


# -- reparameterized sampling -------------------------------------------------


def test_sample_zero_noise_returns_mean():
    d = DiagGaussian(np.array([1.0, -2.0]), np.array([0.3, 0.3]))
    out = reparameterized_sample(d, np.zeros(2))
    assert np.array_equal(out.data, d.mean.data)


def test_sample_unit_noise_unit_std():
    d = DiagGaussian(np.array([1.0, 2.0]), np.zeros(2))
    out = reparameterized_sample(d, np.ones(2))
    assert np.allclose(out.data, [2.0, 3.0])


def test_sample_gradient_wrt_log_std():
    noise = np.array([0.7, -1.3])
    mean = Tensor(np.array([0.1, 0.2]), requires_grad=True)
    log_std = Tensor(np.array([0.4, -0.6]), requires_grad=True)

    def build():
        return reparameterized_sample(DiagGaussian(mean, log_std), noise).sum()

    report = grad_check(build, [("mean", mean), ("log_std", log_std)], eps=1e-6)
    assert report.ok(1e-6), repr(report)
    # analytic value: d/d log_std = exp(log_std) * noise
    from myoe.autodiff import gradients

    grads = gradients(build(), [("log_std", log_std)])
    assert np.allclose(grads["log_std"], np.exp(log_std.data) * noise)


def test_sampling_deterministic_under_seed():
    d = DiagGaussian(np.zeros(4), np.zeros(4))
    a = d.sample(np.random.default_rng(9)).data
    b = d.sample(np.random.default_rng(9)).data
    assert np.array_equal(a, b)


# -- construction invariants ---------------------------------------------------


def test_log_std_clamped_at_construction():
    d = DiagGaussian(np.zeros(2), np.array([-20.0, 20.0]))
    assert np.array_equal(d.log_std.data, [LOG_STD_MIN, LOG_STD_MAX])


def test_non_finite_mean_rejected():
    with pytest.raises(ValueError):
        DiagGaussian(np.array([np.nan]), np.array([0.0]))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        DiagGaussian(np.zeros(2), np.zeros(3))

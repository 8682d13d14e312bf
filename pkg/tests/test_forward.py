import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diffpnp.errors import ConfigurationError, ShapeError
from diffpnp.forward import (
    DownsampleModel,
    FlatModel,
    LinearGaussianModel,
    PhaseRetrievalModel,
    QuantizedSensingModel,
    grad_log_likelihood,
    log_likelihood,
    simulate_measurement,
)


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestLinearGaussian:
    def test_zero_residual(self):
        m = LinearGaussianModel([[1.0]], 1.0)
        np.testing.assert_allclose(log_likelihood(m, np.array([0.7]), np.array([0.7])), -0.5 * math.log(2 * math.pi))

    def test_gaussian_formula(self, rng):
        A = rng.normal(size=(3, 5))
        m = LinearGaussianModel(A, 0.3)
        x, y = rng.normal(size=5), rng.normal(size=3)
        r = y - A @ x
        expected = -r @ r / 0.6 - 1.5 * math.log(2 * math.pi * 0.3)
        np.testing.assert_allclose(m.log_likelihood(x, y), expected, rtol=1e-13)

    def test_gradient_isotropic(self):
        m = LinearGaussianModel(np.eye(2), 0.5)
        x, y = np.array([0.1, -0.4]), np.array([1.0, 2.0])
        np.testing.assert_allclose(grad_log_likelihood(m, x, y), (y - x) / 0.5, rtol=1e-14)

    def test_gradient_full_covariance(self, rng):
        A = rng.normal(size=(3, 4))
        L = rng.normal(size=(3, 3))
        m = LinearGaussianModel(A, L @ L.T + np.eye(3))
        y = rng.normal(size=3)
        for x in rng.normal(size=(20, 4)):
            g = fd_grad(lambda z: m.log_likelihood(z, y), x)
            np.testing.assert_allclose(m.grad_log_likelihood(x, y), g, rtol=1e-5, atol=1e-6)

    def test_batched(self, rng):
        m = LinearGaussianModel(rng.normal(size=(2, 3)), [0.2, 0.4])
        X, y = rng.normal(size=(7, 3)), rng.normal(size=2)
        np.testing.assert_allclose(m.log_likelihood(X, y), [m.log_likelihood(x, y) for x in X])
        np.testing.assert_allclose(m.grad_log_likelihood(X, y), [m.grad_log_likelihood(x, y) for x in X])

    def test_noiseless_simulation(self, rng):
        A = rng.normal(size=(2, 3))
        m = LinearGaussianModel(A, 0.0)
        x = rng.normal(size=3)
        np.testing.assert_array_equal(simulate_measurement(m, x, rng), A @ x)

    def test_noise_variance(self, rng):
        m = LinearGaussianModel(np.eye(1), 0.3)
        ys = np.array([m.simulate_measurement(np.zeros(1), rng)[0] for _ in range(10_000)])
        assert abs(ys.var() / 0.3 - 1) < 0.05

    def test_singular_covariance_rejected_for_likelihood(self):
        m = LinearGaussianModel(np.eye(1), 0.0)
        with pytest.raises(ConfigurationError):
            m.log_likelihood(np.zeros(1), np.zeros(1))

    def test_shape_errors(self):
        m = LinearGaussianModel(np.eye(2), 1.0)
        with pytest.raises(ShapeError):
            m.log_likelihood(np.zeros(3), np.zeros(2))
        with pytest.raises(ShapeError):
            m.log_likelihood(np.zeros(2), np.zeros(3))

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    def test_bounded_by_zero_residual(self, x):
        m = LinearGaussianModel(np.eye(2), 0.4)
        y = np.array([0.3, -0.1])
        assert m.log_likelihood(np.array(x), y) <= m.log_likelihood(y, y)


class TestDownsample:
    def test_rows_sum_to_one(self):
        m = DownsampleModel(8, 4)
        np.testing.assert_allclose(m.A.sum(axis=1), 1.0)
        assert m.A.shape == (2, 8) and np.linalg.matrix_rank(m.A) == 2

    def test_block_average(self):
        m = DownsampleModel(6, 3)
        np.testing.assert_allclose(m.apply(np.arange(6.0)), [1.0, 4.0])

    def test_bad_ratio(self):
        with pytest.raises(ConfigurationError):
            DownsampleModel(7, 4)


class TestPhaseRetrieval:
    MASK = np.array([1.0, -1.0, -1.0, 1.0])

    def test_zero_residual(self):
        m = PhaseRetrievalModel(self.MASK, 0.2)
        x = np.array([0.3, -1.1, 0.4, 2.0])
        assert m.m == 3
        expected = -1.5 * math.log(2 * math.pi * 0.2)
        np.testing.assert_allclose(m.log_likelihood(x, m.apply(x)), expected, rtol=1e-14)

    def test_matches_fft(self, rng):
        m = PhaseRetrievalModel.random(16, rng)
        x = rng.normal(size=16)
        np.testing.assert_allclose(m.apply(x), np.abs(np.fft.rfft(m.mask * x)), atol=1e-12)

    def test_sign_ambiguity(self, rng):
        m = PhaseRetrievalModel.random(8, rng)
        x, y = rng.normal(size=8), rng.normal(size=5)
        assert m.log_likelihood(x, y) == m.log_likelihood(-x, y)
        assert np.all(m.apply(x) >= 0)

    def test_gradient_finite_difference(self, rng):
        m = PhaseRetrievalModel.random(8, rng)
        y = np.abs(rng.normal(size=5)) + 0.5
        for x in rng.normal(size=(100, 8)):
            assert not m.nondifferentiable(x).any()
            g = fd_grad(lambda z: m.log_likelihood(z, y), x)
            np.testing.assert_allclose(m.grad_log_likelihood(x, y), g, rtol=1e-5, atol=1e-6)

    def test_zero_magnitude_fallback(self):
        m = PhaseRetrievalModel(self.MASK, 0.2)
        x = np.zeros(4)
        assert m.nondifferentiable(x).all()
        np.testing.assert_array_equal(m.grad_log_likelihood(x, np.ones(3)), 0.0)

    def test_mask_must_be_signs(self):
        with pytest.raises(ConfigurationError):
            PhaseRetrievalModel([1.0, 0.5])


class TestQuantized:
    def test_zero_pixel(self):
        m = QuantizedSensingModel(3, 0.4)
        y = np.array([1.0, -1.0, 1.0])
        np.testing.assert_allclose(m.log_likelihood(np.zeros(3), y), -3 * math.log(2), rtol=1e-15)

    def test_gradient_formula(self):
        m = QuantizedSensingModel(2, 0.4)
        x, y = np.array([0.3, -1.0]), np.array([-1.0, 1.0])
        expected = (y / 0.4) / (1 + np.exp(y * x / 0.4))
        np.testing.assert_allclose(m.grad_log_likelihood(x, y), expected, rtol=1e-14)

    def test_gradient_finite_difference(self, rng):
        m = QuantizedSensingModel(4, 0.4)
        y = rng.choice([-1.0, 1.0], 4)
        for x in rng.normal(size=(100, 4)):
            g = fd_grad(lambda z: m.log_likelihood(z, y), x)
            np.testing.assert_allclose(m.grad_log_likelihood(x, y), g, rtol=1e-5, atol=1e-8)

    def test_no_overflow(self):
        m = QuantizedSensingModel(1, 0.01)
        assert np.isfinite(m.log_likelihood(np.array([-500.0]), np.array([1.0])))
        assert m.log_likelihood(np.array([500.0]), np.array([1.0])) <= 0

    def test_hard_sign_limit(self, rng):
        m = QuantizedSensingModel(1, 1e-3)
        bits = m.simulate_measurement(np.full((1000, 1), 0.1), rng)
        assert np.all(bits == 1.0)

    def test_bit_frequency(self, rng):
        m = QuantizedSensingModel(1, 0.4)
        bits = m.simulate_measurement(np.full((20_000, 1), 0.3), rng)[:, 0]
        p = 1 / (1 + math.exp(-0.3 / 0.4))
        assert abs((bits == 1).mean() - p) < 4 * math.sqrt(p * (1 - p) / bits.size)

    def test_apply_needs_rng(self):
        with pytest.raises(ValueError):
            QuantizedSensingModel(1).apply(np.zeros(1))

    @given(st.floats(-50, 50), st.sampled_from([-1.0, 1.0]))
    def test_nonpositive(self, x, b):
        assert QuantizedSensingModel(1, 0.4).log_likelihood(np.array([x]), np.array([b])) <= 0


def test_flat_model():
    m = FlatModel(3, value=-1.5)
    np.testing.assert_array_equal(m.log_likelihood(np.ones((2, 3))), [-1.5, -1.5])
    np.testing.assert_array_equal(m.grad_log_likelihood(np.ones(3)), 0.0)

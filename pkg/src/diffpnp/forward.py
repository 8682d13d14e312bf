"""Measurement models: forward operators, log-likelihoods and their gradients.

Every model maps a signal of shape ``(..., d)`` to measurements ``(..., m)``;
log-likelihoods reduce over the last axis.  Models are immutable and the only
randomness enters through explicit ``rng`` arguments.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigurationError, ShapeError

__all__ = [
    "MeasurementModel",
    "LinearGaussianModel",
    "DownsampleModel",
    "PhaseRetrievalModel",
    "QuantizedSensingModel",
    "FlatModel",
    "log_likelihood",
    "grad_log_likelihood",
    "simulate_measurement",
]


class MeasurementModel:
    """Common interface; subclasses set ``d`` and ``m``."""

    d: int
    m: int
    is_linear_gaussian = False

    def apply(self, x, rng=None):
        raise NotImplementedError

    def log_likelihood(self, x, y):
        raise NotImplementedError

    def grad_log_likelihood(self, x, y):
        raise NotImplementedError

    def simulate_measurement(self, x_true, rng):
        raise NotImplementedError

    def _check(self, x, y=None):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            raise ShapeError(f"signal must have trailing dimension {self.d}, got {x.shape}")
        if y is None:
            return x
        y = np.asarray(y, dtype=float)
        if y.shape != (self.m,):
            raise ShapeError(f"measurement must have shape ({self.m},), got {y.shape}")
        return x, y


class LinearGaussianModel(MeasurementModel):
    """``y = A x + xi`` with ``xi ~ N(0, noise_cov)``.

    ``noise_cov`` may be a scalar variance, a ``(m,)`` diagonal, or a full
    ``(m, m)`` matrix.  A singular covariance is accepted for simulation but
    the likelihood then raises.
    """

    is_linear_gaussian = True

    def __init__(self, A, noise_cov):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.A = A
        self.m, self.d = A.shape
        cov = np.asarray(noise_cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(self.m)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (self.m, self.m) or not np.allclose(cov, cov.T):
            raise ConfigurationError(f"noise_cov must be symmetric ({self.m}, {self.m})")
        self.noise_cov = cov

    @cached_property
    def _cov_chol(self):
        try:
            return np.linalg.cholesky(self.noise_cov)
        except np.linalg.LinAlgError:
            raise ConfigurationError("noise covariance is not positive definite") from None

    @cached_property
    def noise_precision(self):
        L_inv = np.linalg.inv(self._cov_chol)
        return L_inv.T @ L_inv

    @cached_property
    def _log_norm(self):
        return -0.5 * self.m * np.log(2 * np.pi) - np.sum(np.log(np.diag(self._cov_chol)))

    def apply(self, x, rng=None):
        return self._check(x) @ self.A.T

    def log_likelihood(self, x, y):
        x, y = self._check(x, y)
        r = y - x @ self.A.T
        return -0.5 * np.einsum("...i,ij,...j->...", r, self.noise_precision, r) + self._log_norm

    def grad_log_likelihood(self, x, y):
        x, y = self._check(x, y)
        r = y - x @ self.A.T
        return r @ (self.noise_precision @ self.A)

    def simulate_measurement(self, x_true, rng):
        x_true = self._check(x_true)
        # eigh tolerates a zero (noiseless) covariance where cholesky would not
        evals, evecs = np.linalg.eigh(self.noise_cov)
        root = evecs * np.sqrt(np.clip(evals, 0, None))
        xi = rng.standard_normal(x_true.shape[:-1] + (self.m,)) @ root.T
        return self.apply(x_true) + xi


class DownsampleModel(LinearGaussianModel):
    """Block averaging by an integer ratio plus white Gaussian noise.

    Stands in for bicubic downsampling: linear, full row rank, rows sum to 1.
    """

    def __init__(self, d: int, ratio: int = 4, noise_var: float = 0.2):
        if ratio < 1 or d % ratio:
            raise ConfigurationError(f"ratio {ratio} must be a positive divisor of d={d}")
        A = np.kron(np.eye(d // ratio), np.full((1, ratio), 1.0 / ratio))
        super().__init__(A, noise_var)
        self.ratio = ratio
        self.noise_var = noise_var


class PhaseRetrievalModel(MeasurementModel):
    """Fourier magnitudes of a sign-coded signal, ``|F(M * x)|``, plus Gaussian noise.

    Uses the half spectrum (``m = d // 2 + 1`` frequencies) of the real DFT,
    evaluated directly from cosine/sine tables.
    """

    def __init__(self, mask, noise_var: float = 0.2):
        mask = np.asarray(mask, dtype=float)
        if mask.ndim != 1 or not np.all(np.abs(mask) == 1):
            raise ConfigurationError("mask must be a 1-D vector of +-1 entries")
        if noise_var <= 0:
            raise ConfigurationError("noise_var must be positive")
        self.mask = mask
        self.noise_var = float(noise_var)
        self.d = mask.size
        self.m = self.d // 2 + 1
        k = np.arange(self.m)[:, None]
        n = np.arange(self.d)[None, :]
        angle = 2 * np.pi * k * n / self.d
        self._cos = np.cos(angle)
        self._sin = -np.sin(angle)

    @classmethod
    def random(cls, d: int, rng, noise_var: float = 0.2):
        return cls(rng.choice([-1.0, 1.0], size=d), noise_var)

    def _spectrum(self, x):
        v = self._check(x) * self.mask
        return v @ self._cos.T, v @ self._sin.T

    def apply(self, x, rng=None):
        re, im = self._spectrum(x)
        return np.hypot(re, im)

    def log_likelihood(self, x, y):
        x, y = self._check(x, y)
        r = y - self.apply(x)
        return -0.5 * np.sum(r**2, axis=-1) / self.noise_var - 0.5 * self.m * np.log(2 * np.pi * self.noise_var)

    def nondifferentiable(self, x):
        """Boolean mask of frequencies with exactly zero magnitude."""
        return self.apply(x) == 0

    def grad_log_likelihood(self, x, y):
        """Almost-everywhere gradient; zero-magnitude frequencies contribute nothing."""
        x, y = self._check(x, y)
        re, im = self._spectrum(x)
        mag = np.hypot(re, im)
        g = (y - mag) / self.noise_var
        safe = np.where(mag > 0, mag, 1.0)
        w = np.where(mag > 0, g / safe, 0.0)
        return self.mask * ((w * re) @ self._cos + (w * im) @ self._sin)

    def simulate_measurement(self, x_true, rng):
        clean = self.apply(x_true)
        return clean + np.sqrt(self.noise_var) * rng.standard_normal(clean.shape)


class QuantizedSensingModel(MeasurementModel):
    """Dithered one-bit quantization: ``P(b = +1 | pixel) = sigmoid(pixel / theta)``."""

    def __init__(self, d: int, theta: float = 0.4):
        if theta <= 0:
            raise ConfigurationError("theta must be positive")
        self.d = self.m = int(d)
        self.theta = float(theta)

    def apply(self, x, rng=None):
        """Draw the random bits; ``rng`` is required since the quantizer is stochastic."""
        if rng is None:
            raise ValueError("the quantizer is stochastic; pass an rng")
        return self.simulate_measurement(x, rng)

    def log_likelihood(self, x, y):
        x, y = self._check(x, y)
        return np.sum(log_expit(y * x / self.theta), axis=-1)

    def grad_log_likelihood(self, x, y):
        x, y = self._check(x, y)
        return (y / self.theta) * expit(-y * x / self.theta)

    def simulate_measurement(self, x_true, rng):
        x_true = self._check(x_true)
        p_plus = expit(x_true / self.theta)
        return np.where(rng.random(x_true.shape) < p_plus, 1.0, -1.0)


class FlatModel(MeasurementModel):
    """Constant log-likelihood ``L(x; y) = value``; measurements are ignored."""

    def __init__(self, d: int, value: float = 0.0):
        self.d = int(d)
        self.m = 0
        self.value = float(value)

    def apply(self, x, rng=None):
        x = self._check(x)
        return np.zeros(x.shape[:-1] + (0,))

    def log_likelihood(self, x, y=None):
        x = self._check(x)
        return np.full(x.shape[:-1], self.value)

    def grad_log_likelihood(self, x, y=None):
        return np.zeros_like(self._check(x))

    def simulate_measurement(self, x_true, rng):
        return self.apply(x_true)


def log_likelihood(model: MeasurementModel, x, y):
    return model.log_likelihood(x, y)


def grad_log_likelihood(model: MeasurementModel, x, y):
    return model.grad_log_likelihood(x, y)


def simulate_measurement(model: MeasurementModel, x_true, rng):
    """Draw ``y`` from the model's noise law at the true signal."""
    return model.simulate_measurement(x_true, rng)

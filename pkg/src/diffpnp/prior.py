"""Gaussian-mixture priors with closed-form scores at every noise level.

A diagonal Gaussian mixture stays a Gaussian mixture under the OU forward
process: component ``k`` at time ``tau`` has mean ``e^{-tau} mu_k`` and variance
``e^{-2 tau} sigma_k^2 + 1 - e^{-2 tau}``.  Everything below evaluates those
marginals in the log domain, so far-tail queries from Langevin proposals do
not overflow.

All functions accept a single point of shape ``(d,)`` or a batch ``(..., d)``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConfigurationError,
    ScheduleIndexError,
    ShapeError,
    SingularScoreError,
    UndefinedNoiseError,
)
from .schedule import DiffusionSchedule, continuous_time_of_step

__all__ = [
    "GaussianMixturePrior",
    "GaussianMixtureOracle",
    "ScoreCorruption",
    "CorruptedOracle",
    "log_marginal",
    "score_continuous",
    "score_discrete",
    "noise_discrete",
    "corrupt",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GaussianMixturePrior:
    """Mixture of axis-aligned Gaussians.

    Args:
        weights: ``(K,)`` mixing weights summing to one.
        means: ``(K, d)`` component means.
        variances: ``(K, d)`` diagonal variances; zeros give point masses.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            # one scalar mean per component (d = 1), or a single d-dim component
            mu = mu[:, None] if w.size == mu.size else mu[None, :]
        if w.ndim != 1 or w.size < 1 or mu.ndim != 2 or mu.shape[0] != w.size:
            raise ConfigurationError("need at least one component and one weight per mean")
        var = np.asarray(self.variances, dtype=float)
        if var.ndim == 1 and var.size == w.size:
            var = var[:, None]  # isotropic variance per component
        try:
            var = np.broadcast_to(var, mu.shape).copy()
        except ValueError:
            raise ConfigurationError(f"variances of shape {var.shape} do not match means {mu.shape}") from None
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"weights must lie in [0, 1] and sum to 1, got sum {w.sum()!r}")
        if np.any(var < 0) or not np.all(np.isfinite(var)):
            raise ConfigurationError("variances must be finite and nonnegative")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
        log_w.flags.writeable = False
        object.__setattr__(self, "_log_w", log_w)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def n_components(self) -> int:
        return int(self.weights.size)

    @classmethod
    def standard_normal(cls, d: int = 1) -> "GaussianMixturePrior":
        return cls([1.0], np.zeros((1, d)), np.ones((1, d)))

    def marginal_params(self, tau: float):
        """Component means and variances of ``X_tau`` under the OU flow."""
        if tau < 0:
            raise ValueError(f"tau must be nonnegative, got {tau}")
        decay = np.exp(-tau)
        # 1 - e^{-2 tau} via expm1 stays accurate for small tau
        return decay * self.means, decay**2 * self.variances - np.expm1(-2.0 * tau)

    def smoothed_params(self, eta: float):
        """Component parameters of ``x + eta * eps`` (heat-flow smoothing, no rescaling)."""
        return self.means, self.variances + eta**2

    def _component_logpdf(self, x, means, variances):
        x = self._check_x(x)
        diff = x[..., None, :] - means
        with np.errstate(divide="ignore", invalid="ignore"):
            quad = np.where(variances > 0, diff**2 / variances, np.where(diff == 0, 0.0, np.inf))
            log_det = np.log(variances)
        return -0.5 * np.sum(quad + log_det + _LOG_2PI, axis=-1)

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ShapeError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return x

    def log_marginal(self, tau: float, x):
        means, variances = self.marginal_params(tau)
        return logsumexp(self._log_w + self._component_logpdf(x, means, variances), axis=-1)

    def log_density(self, x):
        """``log p*(x)``; ``-inf`` off the support of point-mass components."""
        return self.log_marginal(0.0, x)

    def log_smoothed(self, eta: float, x):
        """``log p_eta(x)``, the density of ``x* + eta * eps``."""
        means, variances = self.smoothed_params(eta)
        return logsumexp(self._log_w + self._component_logpdf(x, means, variances), axis=-1)

    def _score(self, x, means, variances):
        if np.any(variances == 0):
            raise SingularScoreError("score undefined at zero noise for a zero-variance component")
        x = self._check_x(x)
        log_r = self._log_w + self._component_logpdf(x, means, variances)
        resp = np.exp(log_r - logsumexp(log_r, axis=-1, keepdims=True))
        return np.sum(resp[..., None] * (means - x[..., None, :]) / variances, axis=-2)

    def score_continuous(self, tau: float, x):
        means, variances = self.marginal_params(tau)
        return self._score(x, means, variances)

    def sample(self, n: int, rng: np.random.Generator):
        k = rng.choice(self.n_components, size=n, p=self.weights)
        return self.means[k] + np.sqrt(self.variances[k]) * rng.standard_normal((n, self.dim))


def log_marginal(prior: GaussianMixturePrior, tau: float, x):
    """Log density of the OU marginal ``X_tau`` at ``x``."""
    return prior.log_marginal(tau, x)


def score_continuous(prior: GaussianMixturePrior, tau: float, x):
    """Gradient of :func:`log_marginal` in ``x``."""
    return prior.score_continuous(tau, x)


def _check_step(s: DiffusionSchedule, t: int, lowest: int = 1):
    if int(t) != t or not (lowest <= t <= s.T):
        raise ScheduleIndexError(f"step index {t} outside [{lowest}, {s.T}]")


def score_discrete(prior: GaussianMixturePrior, schedule: DiffusionSchedule, t: int, x):
    """Score of ``x_t``; identical to the continuous score at ``0.5 log(1/bar_alpha_t)``."""
    _check_step(schedule, t)
    return prior.score_continuous(continuous_time_of_step(schedule, t), x)


def noise_discrete(prior: GaussianMixturePrior, schedule: DiffusionSchedule, t: int, x):
    """Tweedie noise estimate ``-sqrt(1 - bar_alpha_t) * score``."""
    if t == 0:
        raise UndefinedNoiseError("no noise is injected at step 0")
    _check_step(schedule, t)
    return -np.sqrt(1.0 - schedule.bar_alphas[t]) * score_discrete(prior, schedule, t, x)


class GaussianMixtureOracle:
    """Exact score oracle backed by a :class:`GaussianMixturePrior`.

    The oracle is bound to one schedule so that discrete-step queries can be
    answered; it is immutable and safe to share between chains.
    """

    def __init__(self, prior: GaussianMixturePrior, schedule: DiffusionSchedule):
        self.prior = prior
        self.schedule = schedule

    @property
    def dim(self) -> int:
        return self.prior.dim

    def log_marginal(self, tau, x):
        return self.prior.log_marginal(tau, x)

    def score_continuous(self, tau, x):
        return self.prior.score_continuous(tau, x)

    def score_discrete(self, t, x):
        return score_discrete(self.prior, self.schedule, t, x)

    def noise_discrete(self, t, x):
        return noise_discrete(self.prior, self.schedule, t, x)


@dataclass(frozen=True)
class ScoreCorruption:
    """Systematic and random score errors for robustness experiments.

    ``additive_bias`` may be a scalar (applied to every coordinate) or a
    ``(d,)`` vector.  The random part has per-query scale
    ``relative_noise_scale * ||s||``.
    """

    additive_bias: np.ndarray | float = 0.0
    relative_noise_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.relative_noise_scale < 0:
            raise ConfigurationError("relative_noise_scale must be nonnegative")

    @property
    def is_identity(self) -> bool:
        return not np.any(np.asarray(self.additive_bias)) and self.relative_noise_scale == 0


def _query_normals(seed: int, kind: bytes, time: float, row: np.ndarray) -> np.ndarray:
    # counter-based: the draw depends only on (seed, query), never on call order
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<q", int(seed)))
    h.update(kind)
    h.update(struct.pack("<d", float(time)))
    h.update(np.ascontiguousarray(row, dtype="<f8").tobytes())
    key = int.from_bytes(h.digest(), "little")
    return np.random.default_rng(key).standard_normal(row.shape[-1])


class CorruptedOracle:
    """Score oracle whose answers carry a bias and seeded random error."""

    def __init__(self, base, corruption: ScoreCorruption):
        self.base = base
        self.corruption = corruption
        self.schedule = base.schedule

    @property
    def dim(self) -> int:
        return self.base.dim

    def log_marginal(self, tau, x):
        return self.base.log_marginal(tau, x)

    def _perturb(self, s, x, kind, time):
        c = self.corruption
        if c.is_identity:
            return s
        out = s + np.asarray(c.additive_bias, dtype=float)
        if c.relative_noise_scale > 0:
            x = np.asarray(x, dtype=float)
            flat_x = x.reshape(-1, x.shape[-1])
            flat_s = s.reshape(-1, s.shape[-1])
            noise = np.stack([_query_normals(c.seed, kind, time, row) for row in flat_x])
            scale = c.relative_noise_scale * np.linalg.norm(flat_s, axis=-1, keepdims=True)
            out = out + (scale * noise).reshape(s.shape)
        return out

    def score_continuous(self, tau, x):
        return self._perturb(self.base.score_continuous(tau, x), x, b"c", tau)

    def score_discrete(self, t, x):
        return self._perturb(self.base.score_discrete(t, x), x, b"d", t)

    def noise_discrete(self, t, x):
        if t == 0:
            raise UndefinedNoiseError("no noise is injected at step 0")
        return -np.sqrt(1.0 - self.schedule.bar_alphas[t]) * self.score_discrete(t, x)


def corrupt(oracle, c: ScoreCorruption):
    """Wrap ``oracle`` so every score query is perturbed according to ``c``."""
    return CorruptedOracle(oracle, c)

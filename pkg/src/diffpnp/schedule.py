"""Diffusion schedules and the exponential-integrator step.

The forward chain is ``x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) w_t`` with
``bar_alpha_t = prod_{k<=t} (1 - beta_k)`` and ``bar_alpha_0 = 1``.  Step ``t``
corresponds to Ornstein-Uhlenbeck time ``0.5 * log(1 / bar_alpha_t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, OrderingError, ScheduleIndexError

__all__ = [
    "DiffusionSchedule",
    "LinearSdeSpec",
    "make_linear_beta_schedule",
    "continuous_time_of_step",
    "exp_integrator_step",
]


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    """Noise-injection schedule ``(beta_t, alpha_t, bar_alpha_t)``.

    ``betas`` and ``alphas`` are indexed ``1..T`` and stored at positions
    ``0..T-1``; ``bar_alphas`` has length ``T + 1`` with ``bar_alphas[0] == 1``.
    Instances hash by identity so they can key per-schedule caches.
    """

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or betas.size < 1:
            raise ConfigurationError("betas must be a nonempty 1-D sequence")
        if np.any(betas <= 0) or np.any(betas >= 1):
            raise ConfigurationError("every beta must lie in (0, 1)")
        betas = betas.copy()
        betas.flags.writeable = False
        alphas = 1.0 - betas
        alphas.flags.writeable = False
        bar = np.empty(betas.size + 1)
        bar[0] = 1.0
        np.cumprod(alphas, out=bar[1:])
        if bar[-1] <= 0:
            raise ConfigurationError("bar_alpha_T underflowed to zero")
        bar.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "bar_alphas", bar)

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def bar_alpha(self, t: int) -> float:
        self._check_index(t)
        return float(self.bar_alphas[t])

    def _check_index(self, t):
        if not (0 <= t <= self.T) or int(t) != t:
            raise ScheduleIndexError(f"step index {t} outside [0, {self.T}]")


def make_linear_beta_schedule(T: int = 1000, beta_1: float = 1e-4, beta_T: float = 0.02) -> DiffusionSchedule:
    """Linearly interpolated betas from ``beta_1`` to ``beta_T`` over ``T`` steps."""
    if int(T) != T or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T!r}")
    if not (0 < beta_1 <= beta_T < 1):
        raise ConfigurationError(f"need 0 < beta_1 <= beta_T < 1, got beta_1={beta_1}, beta_T={beta_T}")
    return DiffusionSchedule(np.linspace(beta_1, beta_T, int(T)))


def continuous_time_of_step(s: DiffusionSchedule, t: int) -> float:
    """OU time ``0.5 * log(1 / bar_alpha_t)`` of discrete step ``t``."""
    s._check_index(t)
    return -0.5 * float(np.log(s.bar_alphas[t]))


@dataclass(frozen=True)
class LinearSdeSpec:
    """One step of ``dM = (v M + f) dtau + sqrt(beta) dB``.

    ``drift_linear`` is the coefficient ``v``, held constant over the step;
    ``drift_frozen`` is the drift ``f`` frozen at the left endpoint.
    """

    drift_linear: float = 0.0
    drift_frozen: np.ndarray | float = 0.0
    diffusion_coeff: float = 0.0

    def __post_init__(self):
        if self.diffusion_coeff < 0:
            raise ConfigurationError("diffusion_coeff must be nonnegative")
        if not np.isfinite(self.drift_linear):
            raise ConfigurationError("drift_linear must be finite")


def _phi(a, h):
    # (e^{a h} - 1) / a, with the a -> 0 limit h; expm1 keeps small |a h| accurate
    if a == 0.0:
        return h
    return np.expm1(a * h) / a


def exp_integrator_step(spec: LinearSdeSpec, state, tau_from: float, tau_to: float, noise=None):
    """Advance ``state`` from ``tau_from`` to ``tau_to`` solving the linear part exactly.

    Returns ``e^{v h} state + phi(v, h) f + sqrt(beta * phi(2v, h)) noise`` with
    ``h = tau_to - tau_from`` and ``phi(a, h) = (e^{a h} - 1) / a``.
    """
    if tau_to < tau_from:
        raise OrderingError(f"tau_to={tau_to} precedes tau_from={tau_from}")
    beta = spec.diffusion_coeff
    if (noise is None) != (beta == 0):
        raise ValueError("noise must be supplied exactly when diffusion_coeff > 0")
    h = float(tau_to) - float(tau_from)
    v = float(spec.drift_linear)
    state = np.asarray(state, dtype=float)
    out = np.exp(v * h) * state + _phi(v, h) * np.asarray(spec.drift_frozen, dtype=float)
    if beta > 0:
        out = out + np.sqrt(beta * _phi(2.0 * v, h)) * np.asarray(noise, dtype=float)
    return out

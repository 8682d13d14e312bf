"""Denoising diffusion samplers for ``p*(x | x + eta * eps = x_noisy)``.

``dds_ddpm`` reverses a heat flow started at the prior (stochastic);
``dds_ddim`` integrates the probability-flow ODE of an OU process started at
the centred posterior (deterministic given its initial draw).  Both use the
exponential integrator and query the unconditional noise estimate at
discrete steps ``t <= T'`` only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InsufficientScheduleError
from .schedule import DiffusionSchedule

__all__ = [
    "HeatFlowSchedule",
    "OUDenoiseSchedule",
    "truncation_index",
    "heat_flow_schedule",
    "ou_denoise_schedule",
    "h_fn",
    "tilde_tau",
    "dds_ddpm",
    "dds_ddim",
    "dds",
]


def truncation_index(s: DiffusionSchedule, eta: float) -> int:
    """Largest ``t`` with ``bar_alpha_t > 1 / (eta^2 + 1)`` (strict)."""
    if eta <= 0:
        raise ValueError(f"eta must be positive, got {eta}")
    ok = np.nonzero(s.bar_alphas > 1.0 / (eta**2 + 1.0))[0]
    # bar_alphas is strictly decreasing, so the admissible steps are a prefix
    return int(ok[-1])


@dataclass(frozen=True)
class HeatFlowSchedule:
    T_prime: int
    taus: np.ndarray


@dataclass(frozen=True)
class OUDenoiseSchedule:
    T_prime: int
    bar_us: np.ndarray


def _require_steps(s, eta):
    T_prime = truncation_index(s, eta)
    if T_prime < 1:
        raise InsufficientScheduleError(
            f"schedule cannot represent eta={eta}: bar_alpha_1={s.bar_alphas[1]:.6g} "
            f"<= 1/(eta^2+1)={1 / (eta**2 + 1):.6g}; refine the schedule"
        )
    return T_prime


@lru_cache(maxsize=256)
def heat_flow_schedule(s: DiffusionSchedule, eta: float) -> HeatFlowSchedule:
    """Heat-flow times ``tau_t = 1/bar_alpha_t - 1`` for ``0 <= t <= T'``."""
    T_prime = _require_steps(s, eta)
    taus = 1.0 / s.bar_alphas[: T_prime + 1] - 1.0
    taus.flags.writeable = False
    return HeatFlowSchedule(T_prime, taus)


@lru_cache(maxsize=256)
def ou_denoise_schedule(s: DiffusionSchedule, eta: float) -> OUDenoiseSchedule:
    """``u_t = ((eta^2+1) a_t - 1) / (eta^2 + a_t - 1)`` with ``a_t = bar_alpha_t``."""
    T_prime = _require_steps(s, eta)
    a = s.bar_alphas[: T_prime + 1]
    bar_us = ((eta**2 + 1.0) * a - 1.0) / (eta**2 + a - 1.0)
    # u_0 = 1 analytically; rounding can push it (or its neighbours) just above 1
    bar_us = np.minimum(bar_us, 1.0)
    bar_us[0] = 1.0
    bar_us.flags.writeable = False
    return OUDenoiseSchedule(T_prime, bar_us)


def h_fn(eta: float, u):
    """``-arctan(eta / sqrt(1/u - 1))``; equals ``-pi/2`` at ``u = 1``."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u > 1):
        raise ValueError("u must lie in (0, 1]")
    # arctan2 gives the u = 1 limit without a special case
    out = -np.arctan2(eta, np.sqrt(1.0 / u - 1.0))
    return float(out) if out.ndim == 0 else out


def tilde_tau(tau, eta: float):
    """OU time at which the posterior-initialised flow meets the prior flow."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    g = np.expm1(2.0 * tau)
    with np.errstate(invalid="ignore"):
        frac = np.where(np.isinf(g), eta**2, eta**2 * g / (eta**2 + g))
    out = 0.5 * np.log1p(frac)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=256)
def _ddpm_coeffs(s, eta):
    hf = heat_flow_schedule(s, eta)
    root = np.sqrt(hf.taus)
    drift = 2.0 * np.diff(root)  # index t-1 holds 2 (sqrt tau_t - sqrt tau_{t-1})
    noise = np.sqrt(np.diff(hf.taus))
    query = np.sqrt(s.bar_alphas[: hf.T_prime + 1])
    return hf.T_prime, drift, noise, query


def dds_ddpm(x_noisy, oracle, s: DiffusionSchedule, eta: float, rng: np.random.Generator):
    """Stochastic denoising posterior sampler.

    Args:
        x_noisy: ``(d,)`` or ``(n, d)`` noisy observations, one chain per row.
        oracle: score oracle exposing ``noise_discrete(t, x)``.
        s: diffusion schedule the oracle is indexed by.
        eta: known noise level of ``x_noisy``.
        rng: source of the per-step Gaussian increments.
    """
    T_prime, drift, noise, query = _ddpm_coeffs(s, float(eta))
    x = np.array(x_noisy, dtype=float)
    for t in range(T_prime, 0, -1):
        eps = oracle.noise_discrete(t, query[t] * x)
        x = x - drift[t - 1] * eps + noise[t - 1] * rng.standard_normal(x.shape)
    return x


@lru_cache(maxsize=256)
def _ddim_coeffs(s, eta):
    ou = ou_denoise_schedule(s, eta)
    u = ou.bar_us
    scale = (eta**2 - 1.0) * u + 1.0
    assert np.all(scale > 0), "(eta^2 - 1) u + 1 must stay positive for u in (0, 1]"
    root = np.sqrt(scale)
    h = h_fn(eta, u)
    ratio = root[:-1] / root[1:]  # index t-1 holds root_{t-1} / root_t
    eps_coef = root[:-1] * (h[:-1] - h[1:])
    a = s.bar_alphas[: ou.T_prime + 1]
    q_noisy = np.sqrt(a)
    q_z = eta**2 * np.sqrt(u * a) / scale
    return ou.T_prime, ratio, eps_coef, q_noisy, q_z


def dds_ddim(x_noisy, oracle, s: DiffusionSchedule, eta: float, rng: np.random.Generator | None = None, z_init=None):
    """Deterministic denoising posterior sampler.

    The only randomness is the initial ``z_{T'} ~ N(0, I)``; pass ``z_init`` to
    fix it, in which case ``rng`` is not used.  Returns ``x_noisy + z_0``.
    """
    T_prime, ratio, eps_coef, q_noisy, q_z = _ddim_coeffs(s, float(eta))
    x_noisy = np.asarray(x_noisy, dtype=float)
    if z_init is None:
        z = rng.standard_normal(x_noisy.shape)
    else:
        z = np.array(np.broadcast_to(z_init, x_noisy.shape), dtype=float)
    for t in range(T_prime, 0, -1):
        eps = oracle.noise_discrete(t, q_noisy[t] * x_noisy + q_z[t] * z)
        z = ratio[t - 1] * z + eps_coef[t - 1] * eps
    return x_noisy + z


def dds(variant: str, x_noisy, oracle, s, eta, rng):
    """Dispatch to :func:`dds_ddpm` or :func:`dds_ddim` by name."""
    if variant == "ddpm":
        return dds_ddpm(x_noisy, oracle, s, eta, rng)
    if variant == "ddim":
        return dds_ddim(x_noisy, oracle, s, eta, rng)
    raise ValueError(f"unknown DDS variant {variant!r}; expected 'ddpm' or 'ddim'")

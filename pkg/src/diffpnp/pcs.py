"""Proximal consistency samplers for ``exp(L(z; y) - ||z - x||^2 / (2 eta^2))``.

``pcs_mala`` is Metropolis-adjusted Langevin with an exponential-integrator
proposal; the proximal pull towards ``x`` is integrated exactly, so for a flat
likelihood the proposal is the exact OU transition and every move is
accepted.  ``pcs_linear_gaussian`` draws the same target in closed form when
the forward model is linear with Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigurationError, NumericalFailureError

__all__ = [
    "PCSConfig",
    "PCSDiagnostics",
    "DEFAULT_GAMMA_FACTOR",
    "log_proposal_density",
    "pcs_mala",
    "mala_step",
    "log_metropolis_ratio",
    "pcs_linear_gaussian",
    "linear_gaussian_moments",
]

# gamma = eta^2 * log(1 / 0.7) gives r = exp(-gamma / eta^2) = 0.7
DEFAULT_GAMMA_FACTOR = math.log(1.0 / 0.7)


@dataclass(frozen=True)
class PCSConfig:
    """Langevin step size and chain length.

    Either fix ``gamma`` outright or leave it ``None`` and let it scale with
    the proximal parameter as ``gamma_factor * eta^2`` (what the DPnP driver
    needs, since ``eta`` changes across iterations).
    """

    N: int = 200
    gamma: float | None = None
    gamma_factor: float = DEFAULT_GAMMA_FACTOR

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma!r}")
        if not self.gamma_factor > 0:
            raise ConfigurationError(f"gamma_factor must be positive, got {self.gamma_factor!r}")

    def gamma_for(self, eta: float) -> float:
        return self.gamma if self.gamma is not None else self.gamma_factor * eta**2


@dataclass(frozen=True)
class PCSDiagnostics:
    """Per-chain diagnostics (scalars for a single chain, arrays for a batch)."""

    acceptance_rate: np.ndarray | float
    final_log_target: np.ndarray | float
    max_abs_log_ratio: np.ndarray | float


def _proposal_mean(z, x, grad, eta, r):
    return r * z + (1.0 - r) * x + eta**2 * (1.0 - r) * grad


def _gauss_logpdf(z, mean, var):
    d = z.shape[-1]
    return -0.5 * np.sum((z - mean) ** 2, axis=-1) / var - 0.5 * d * np.log(2 * np.pi * var)


def log_proposal_density(z_to, z_from, x, model, y, eta: float, gamma: float):
    """``log Q(z_to; z_from)``: Gaussian with mean
    ``r z + (1 - r) x + eta^2 (1 - r) grad L(z)`` and covariance ``eta^2 (1 - r^2) I``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    z_from = np.asarray(z_from, dtype=float)
    r = math.exp(-gamma / eta**2)
    mean = _proposal_mean(z_from, np.asarray(x, dtype=float), model.grad_log_likelihood(z_from, y), eta, r)
    return _gauss_logpdf(np.asarray(z_to, dtype=float), mean, eta**2 * (1.0 - r * r))


def _log_target(model, z, x, y, eta):
    return model.log_likelihood(z, y) - 0.5 * np.sum((z - x) ** 2, axis=-1) / eta**2


def log_metropolis_ratio(z_from, z_to, x, y, model, eta: float, gamma: float):
    """``log q`` for the move ``z_from -> z_to``: target ratio times reverse/forward proposal ratio."""
    z_from = np.asarray(z_from, dtype=float)
    z_to = np.asarray(z_to, dtype=float)
    return (
        _log_target(model, z_to, x, y, eta)
        - _log_target(model, z_from, x, y, eta)
        + log_proposal_density(z_from, z_to, x, model, y, eta, gamma)
        - log_proposal_density(z_to, z_from, x, model, y, eta, gamma)
    )


def mala_step(z, x, y, model, eta: float, gamma: float, rng: np.random.Generator):
    """One Metropolis-adjusted transition from ``z``; returns ``(z_next, accepted)``."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    r = math.exp(-gamma / eta**2)
    prop_sd = eta * math.sqrt(1.0 - r * r)
    z_new = _proposal_mean(z, x, model.grad_log_likelihood(z, y), eta, r) + prop_sd * rng.standard_normal(z.shape)
    log_q = log_metropolis_ratio(z, z_new, x, y, model, eta, gamma)
    accept = np.log(rng.random(np.shape(log_q))) < log_q
    return np.where(np.asarray(accept)[..., None], z_new, z), accept


def pcs_mala(x, y, model, eta: float, cfg: PCSConfig, rng: np.random.Generator):
    """Run ``cfg.N`` Metropolis-adjusted Langevin steps started at ``x``.

    ``x`` may be ``(d,)`` or a batch ``(n, d)``; each row is an independent
    chain anchored at its own proximal point.  When ``gamma`` is so small
    that ``r`` rounds to one the proposal is the current point and the chain
    stays at ``x``.

    Returns:
        ``(z_N, PCSDiagnostics)``.

    Raises:
        NumericalFailureError: a gradient or target evaluation was not finite.
    """
    x = np.asarray(x, dtype=float)
    gamma = cfg.gamma_for(eta)
    r = math.exp(-gamma / eta**2)
    prop_var = eta**2 * (1.0 - r * r)
    prop_sd = math.sqrt(prop_var)

    def evaluate(z):
        lt = _log_target(model, z, x, y, eta)
        g = model.grad_log_likelihood(z, y)
        if not (np.all(np.isfinite(lt)) and np.all(np.isfinite(g))):
            raise NumericalFailureError("non-finite log-target or gradient in PCS", state=z.copy())
        return lt, g

    z = x.copy()
    lt, g = evaluate(z)
    batch = x.shape[:-1]
    if prop_var == 0.0:
        diag = PCSDiagnostics(_scalarize(np.ones(batch)), _scalarize(lt), _scalarize(np.zeros(batch)))
        return z, diag
    accepted = np.zeros(batch, dtype=np.int64)
    max_abs = np.zeros(batch)
    for _ in range(cfg.N):
        mean_fwd = _proposal_mean(z, x, g, eta, r)
        z_new = mean_fwd + prop_sd * rng.standard_normal(z.shape)
        lt_new, g_new = evaluate(z_new)
        mean_bwd = _proposal_mean(z_new, x, g_new, eta, r)
        log_q = (
            lt_new
            - lt
            + _gauss_logpdf(z, mean_bwd, prop_var)
            - _gauss_logpdf(z_new, mean_fwd, prop_var)
        )
        np.maximum(max_abs, np.abs(log_q), out=max_abs)
        # log-uniform vs log q avoids exponentiating large ratios
        accept = np.log(rng.random(log_q.shape)) < log_q
        z = np.where(accept[..., None], z_new, z)
        lt = np.where(accept, lt_new, lt)
        g = np.where(accept[..., None], g_new, g)
        accepted += accept
    diag = PCSDiagnostics(
        acceptance_rate=_scalarize(accepted / cfg.N),
        final_log_target=_scalarize(lt),
        max_abs_log_ratio=_scalarize(max_abs),
    )
    return z, diag


def _scalarize(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def _linear_gaussian_factors(model, y, eta):
    AtP = model.A.T @ model.noise_precision
    precision = AtP @ model.A + np.eye(model.d) / eta**2
    try:
        chol = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("normal-equations matrix is singular") from None
    return AtP @ np.asarray(y, dtype=float), chol


def pcs_linear_gaussian(x, y, model, eta: float, rng: np.random.Generator):
    """Exact draw from ``N(x_tilde, Sigma_tilde)`` for a linear Gaussian model.

    ``Sigma_tilde = (A^T S^-1 A + I / eta^2)^-1`` and
    ``x_tilde = Sigma_tilde (A^T S^-1 y + x / eta^2)``.  The noise is shaped with
    the inverse-transposed Cholesky factor of the precision, which has the
    same law as the symmetric square root.
    """
    x = np.asarray(x, dtype=float)
    rhs_y, chol = _linear_gaussian_factors(model, y, eta)
    rhs = rhs_y + x / eta**2
    # solve P m = rhs with P = L L^T, batched over rows of rhs
    tmp = solve_triangular(chol, rhs.reshape(-1, model.d).T, lower=True)
    mean = solve_triangular(chol.T, tmp, lower=False).T.reshape(x.shape)
    w = rng.standard_normal(x.shape)
    noise = solve_triangular(chol.T, w.reshape(-1, model.d).T, lower=False).T.reshape(x.shape)
    return mean + noise


def linear_gaussian_moments(x, y, model, eta: float):
    """Mean and covariance of the closed-form proximal target (for checks)."""
    rhs_y, chol = _linear_gaussian_factors(model, y, eta)
    cov = np.linalg.inv(chol @ chol.T)
    return cov @ (rhs_y + np.asarray(x, dtype=float) / eta**2), cov

"""Ground truth on a 1-D grid, sample-vs-density distances, and grid kernels.

Densities live on a uniform grid and are integrated with the trapezoid rule.
A :class:`GridDensity` stores both the normalised density values and the
quadrature masses ``weights = trapezoid_weight * density`` (which sum to one),
so total variation between two grid densities is ``0.5 * sum |w - w'|``.

The kernel matrices discretise the one-step transition kernels of the PCS and
DDS steps with the same quadrature.  The resulting finite chains are exactly
reversible with respect to explicit grid stationary laws, which is what the
detailed-balance and spectral checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DomainCoverageError, NumericalFailureError, ResolutionError
from .prior import GaussianMixturePrior

__all__ = [
    "GridDensity",
    "KernelMatrix",
    "make_grid",
    "trapezoid_weights",
    "grid_density_from_log",
    "grid_prior",
    "grid_posterior",
    "grid_q_eta",
    "grid_pi_eta",
    "grid_denoising_posterior",
    "analytic_gm_linear_posterior",
    "build_kernel",
    "detailed_balance_residual",
    "stationarity_tv",
    "kernel_spectrum",
    "spectral_analysis",
    "default_test_density",
    "tv_distance",
    "wasserstein1_1d",
    "binned_tv",
    "ks_statistic",
]

KERNEL_LABELS = ("PCS", "DDS", "DPnP", "AUX")


@dataclass(frozen=True, eq=False)
class GridDensity:
    """A normalised density on a uniform 1-D grid.

    Attributes:
        points: strictly increasing grid.
        weights: quadrature masses, nonnegative and summing to one.
        spacing: grid step.
        density: density values, ``sum(trapezoid_weights * density) == 1``.
        unnormalized: optional unnormalised values kept by some oracles.
    """

    points: np.ndarray
    weights: np.ndarray
    spacing: float
    density: np.ndarray
    unnormalized: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.points.size

    def cdf(self) -> np.ndarray:
        """Trapezoid CDF at the grid points (0 at the left end, 1 at the right)."""
        seg = 0.5 * self.spacing * (self.density[1:] + self.density[:-1])
        return np.concatenate([[0.0], np.cumsum(seg)])

    def cdf_at(self, x):
        return np.interp(x, self.points, self.cdf(), left=0.0, right=1.0)

    def mean(self) -> float:
        return float(np.sum(self.weights * self.points))

    def var(self) -> float:
        return float(np.sum(self.weights * (self.points - self.mean()) ** 2))

    def sample(self, n: int, rng: np.random.Generator):
        """Inverse-CDF draws (linear interpolation of the CDF)."""
        cdf = self.cdf()
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        return np.interp(rng.random(n), cdf[keep], self.points[keep])


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Row-stochastic transition matrix on a grid.

    ``stationary`` holds the exact stationary masses of this finite chain
    (the chain is reversible with respect to them).
    """

    matrix: np.ndarray
    label: str
    eta: float
    points: np.ndarray
    stationary: np.ndarray


def make_grid(prior: GaussianMixturePrior, n: int = 401, width: float = 8.0, eta: float = 0.0):
    """Uniform grid over the prior mean +- ``width`` standard deviations.

    The half-width is ``width * sqrt(max_var + eta^2)`` plus the largest
    distance from the mixture mean to a component mean, so every component
    is covered even when the mixture is wide.
    """
    if prior.dim != 1:
        raise ConfigurationError("grids are one-dimensional; the prior has d > 1")
    if n < 3:
        raise ConfigurationError("a grid needs at least 3 points")
    mu = prior.means[:, 0]
    centre = float(np.dot(prior.weights, mu))
    half = width * np.sqrt(prior.variances.max() + eta**2) + np.max(np.abs(mu - centre))
    if half == 0:
        half = width
    return np.linspace(centre - half, centre + half, n)


def trapezoid_weights(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    h = _spacing(points)
    w = np.full(points.size, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _spacing(points):
    if points.ndim != 1 or points.size < 3:
        raise ConfigurationError("grid must be 1-D with at least 3 points")
    d = np.diff(points)
    if np.any(d <= 0):
        raise ConfigurationError("grid points must be strictly increasing")
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ConfigurationError("grid must be uniform")
    return float(d[0])


def grid_density_from_log(points, log_values, keep_unnormalized: bool = False) -> GridDensity:
    """Normalise ``exp(log_values)`` by trapezoid quadrature, in the log domain."""
    points = np.asarray(points, dtype=float)
    tw = trapezoid_weights(points)
    log_values = np.asarray(log_values, dtype=float)
    with np.errstate(divide="ignore"):
        log_mass = np.log(tw) + log_values
    log_z = logsumexp(log_mass)
    if not np.isfinite(log_z):
        raise DomainCoverageError("density vanishes (or is not finite) everywhere on the grid")
    weights = np.exp(log_mass - log_z)
    density = np.exp(log_values - log_z)
    unnorm = np.exp(log_values) if keep_unnormalized else None
    return GridDensity(points, weights, _spacing(points), density, unnorm)


def _check_1d(prior, model):
    if prior.dim != 1 or model.d != 1:
        raise ConfigurationError("grid oracles require d = 1")


def _log_lik(model, y, points):
    return np.asarray(model.log_likelihood(points[:, None], y), dtype=float)


def grid_prior(prior, grid) -> GridDensity:
    grid = np.asarray(grid, dtype=float)
    return grid_density_from_log(grid, prior.log_density(grid[:, None]))


def grid_posterior(prior, model, y, grid) -> GridDensity:
    """``p*(x) exp(L(x; y))`` normalised on the grid."""
    _check_1d(prior, model)
    grid = np.asarray(grid, dtype=float)
    return grid_density_from_log(grid, prior.log_density(grid[:, None]) + _log_lik(model, y, grid))


def _log_q_eta(model, y, eta, grid):
    h = _spacing(grid)
    if eta == 0:
        return _log_lik(model, y, grid)
    if h > eta / 4:
        raise ResolutionError(f"grid spacing {h:.4g} exceeds eta/4 = {eta / 4:.4g}; refine the grid")
    # integrate over a padded copy of the grid so the convolution is not cut at the ends
    pad = int(np.ceil(10 * eta / h))
    ext = grid[0] + h * np.arange(-pad, grid.size + pad)
    log_src = np.log(trapezoid_weights(ext)) + _log_lik(model, y, ext)
    diff = grid[:, None] - ext[None, :]
    log_q = logsumexp(log_src[None, :] - 0.5 * diff**2 / eta**2, axis=1)
    return log_q - 0.5 * np.log(2 * np.pi * eta**2)


def grid_q_eta(model, y, eta: float, grid) -> GridDensity:
    """Gaussian smoothing of the likelihood, ``q_eta = exp(L) * N(0, eta^2)``.

    ``unnormalized`` carries ``q_eta`` itself; ``eta = 0`` returns
    ``exp(L)`` without any quadrature.
    """
    if model.d != 1:
        raise ConfigurationError("grid oracles require d = 1")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    grid = np.asarray(grid, dtype=float)
    return grid_density_from_log(grid, _log_q_eta(model, y, eta, grid), keep_unnormalized=True)


def grid_pi_eta(prior, model, y, eta: float, grid) -> GridDensity:
    """``pi_eta ~ p* q_eta``, the stationary law of DPnP at fixed ``eta``."""
    _check_1d(prior, model)
    grid = np.asarray(grid, dtype=float)
    return grid_density_from_log(grid, prior.log_density(grid[:, None]) + _log_q_eta(model, y, eta, grid))


def grid_denoising_posterior(prior, x_noisy: float, eta: float, grid) -> GridDensity:
    """``p*(x | x + eta eps = x_noisy)`` on the grid."""
    grid = np.asarray(grid, dtype=float)
    log_v = prior.log_density(grid[:, None]) - 0.5 * (grid - x_noisy) ** 2 / eta**2
    return grid_density_from_log(grid, log_v)


def analytic_gm_linear_posterior(prior: GaussianMixturePrior, model, y) -> GaussianMixturePrior:
    """Exact posterior of a diagonal Gaussian mixture under ``y = A x + N(0, S)``.

    Each component is updated by Gaussian conjugacy and reweighted by its
    evidence ``N(y; A mu_k, A V_k A^T + S)``.  The covariance form used here
    tolerates zero-variance components.

    Raises:
        ConfigurationError: a component posterior covariance is not diagonal,
            so the result is not representable as a diagonal mixture.
    """
    A = model.A
    S = model.noise_cov
    y = np.asarray(y, dtype=float)
    means, variances, log_w = [], [], []
    for k in range(prior.n_components):
        mu = prior.means[k]
        V = np.diag(prior.variances[k])
        VAt = V @ A.T
        E = A @ VAt + S
        E_chol = np.linalg.cholesky(E)
        gain = np.linalg.solve(E, VAt.T).T
        r = y - A @ mu
        C = V - gain @ VAt.T
        off = C - np.diag(np.diag(C))
        if np.max(np.abs(off), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(C))):
            raise ConfigurationError("component posterior covariance is not diagonal")
        white = np.linalg.solve(E_chol, r)
        log_ev = -0.5 * white @ white - np.sum(np.log(np.diag(E_chol))) - 0.5 * r.size * np.log(2 * np.pi)
        means.append(mu + gain @ r)
        variances.append(np.clip(np.diag(C), 0.0, None))
        log_w.append(prior._log_w[k] + log_ev)
    log_w = np.array(log_w)
    w = np.exp(log_w - logsumexp(log_w))
    return GaussianMixturePrior(w / w.sum(), np.array(means), np.array(variances))


def _gauss_matrix(points, eta):
    diff = points[:, None] - points[None, :]
    return -0.5 * diff**2 / eta**2


def _row_normalize(log_m, what):
    log_rows = logsumexp(log_m, axis=1, keepdims=True)
    if not np.all(np.isfinite(log_rows)):
        raise DomainCoverageError(f"{what} kernel has an empty row on this grid")
    return np.exp(log_m - log_rows), log_rows[:, 0]


def build_kernel(prior, model, y, eta: float, grid, which: str = "DPnP") -> KernelMatrix:
    """Quadrature discretisation of a DPnP transition kernel.

    ``PCS``: ``K(x, x') ~ exp(L(x') - (x' - x)^2 / (2 eta^2))``.
    ``DDS``: ``K(x, x') ~ p*(x') exp(-(x' - x)^2 / (2 eta^2))``.
    ``DPnP`` is PCS followed by DDS; ``AUX`` is DDS followed by PCS.
    """
    if which not in KERNEL_LABELS:
        raise ConfigurationError(f"kernel label must be one of {KERNEL_LABELS}, got {which!r}")
    _check_1d(prior, model)
    if not eta > 0:
        raise ConfigurationError("eta must be positive")
    grid = np.asarray(grid, dtype=float)
    h = _spacing(grid)
    if h > eta / 4:
        raise ResolutionError(f"grid spacing {h:.4g} exceeds eta/4 = {eta / 4:.4g}; refine the grid")
    log_tw = np.log(trapezoid_weights(grid))
    log_lik = _log_lik(model, y, grid)
    log_p = prior.log_density(grid[:, None])
    log_g = _gauss_matrix(grid, eta)
    P_pcs, log_Q = _row_normalize(log_tw + log_lik + log_g, "PCS")
    P_dds, log_R = _row_normalize(log_tw + log_p + log_g, "DDS")
    # exact stationary masses of each finite chain
    if which == "PCS":
        M, log_pi = P_pcs, log_tw + log_lik + log_Q
    elif which == "DDS":
        M, log_pi = P_dds, log_tw + log_p + log_R
    elif which == "DPnP":
        M, log_pi = P_pcs @ P_dds, log_tw + log_p + log_Q
    else:
        M, log_pi = P_dds @ P_pcs, log_tw + log_lik + log_R
    pi = np.exp(log_pi - logsumexp(log_pi))
    return KernelMatrix(M, which, float(eta), grid, pi)


def _masses(pi):
    return np.asarray(pi.weights if isinstance(pi, GridDensity) else pi, dtype=float)


def detailed_balance_residual(K, pi) -> float:
    """``max |pi_i K_ij - pi_j K_ji| / max(pi_i K_ij)``."""
    M = K.matrix if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    flow = _masses(pi)[:, None] * M
    return float(np.max(np.abs(flow - flow.T)) / np.max(flow))


def stationarity_tv(K, pi) -> float:
    """``TV(pi K, pi)`` for masses ``pi``."""
    M = K.matrix if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    p = _masses(pi)
    return float(0.5 * np.sum(np.abs(p @ M - p)))


def _symmetrized(M, pi):
    support = pi > 0
    M = M[np.ix_(support, support)]
    root = np.sqrt(pi[support])
    S = root[:, None] * M / root[None, :]
    return 0.5 * (S + S.T)


def kernel_spectrum(K, pi=None) -> np.ndarray:
    """Eigenvalues (descending) of a reversible kernel, via its ``pi``-symmetrisation."""
    M = K.matrix if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    if pi is None:
        if not isinstance(K, KernelMatrix):
            raise ValueError("pass pi for a bare matrix")
        pi = K.stationary
    try:
        ev = np.linalg.eigvalsh(_symmetrized(M, _masses(pi)))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigensolver failed: {exc}") from None
    return ev[::-1]


def default_test_density(pi, points) -> np.ndarray:
    """A tilted copy of ``pi`` with bounded ratio ``p / pi`` in ``[0.2, 1.8]``."""
    pi = _masses(pi)
    points = np.asarray(points, dtype=float)
    m = np.sum(pi * points)
    sd = np.sqrt(np.sum(pi * (points - m) ** 2))
    p = pi * (1.0 + 0.8 * np.tanh(2.0 * (points - m) / sd))
    return p / p.sum()


def spectral_analysis(K, pi=None, p0=None, n_steps: int = 10):
    """Second eigenvalue modulus and the chi-square decay of ``p0 K^n``.

    Args:
        K: a :class:`KernelMatrix` (or bare matrix together with ``pi``).
        pi: stationary masses; defaults to ``K.stationary``.
        p0: initial masses; defaults to :func:`default_test_density`.
        n_steps: number of transitions.

    Returns:
        ``(lambda2, chi2)`` where ``chi2[n] = chi^2(p0 K^n || pi)`` for
        ``n = 0..n_steps``.
    """
    M = K.matrix if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    if pi is None:
        pi = K.stationary
    pi = _masses(pi)
    ev = kernel_spectrum(M, pi)
    lam2 = float(np.max(np.abs(ev[1:]))) if ev.size > 1 else 0.0
    if p0 is None:
        pts = K.points if isinstance(K, KernelMatrix) else np.arange(pi.size, dtype=float)
        p0 = default_test_density(pi, pts)
    p = np.asarray(p0, dtype=float)
    support = pi > 0
    chi2 = []
    for n in range(n_steps + 1):
        if n:
            p = p @ M
        chi2.append(float(np.sum((p[support] - pi[support]) ** 2 / pi[support])))
    return lam2, np.array(chi2)


def tv_distance(a: GridDensity, b: GridDensity) -> float:
    """``0.5 * sum |w_a - w_b|`` for densities on the same grid."""
    if a.points.shape != b.points.shape or not np.allclose(a.points, b.points):
        raise ValueError("densities live on different grids")
    return float(0.5 * np.sum(np.abs(a.weights - b.weights)))


def _sorted_samples(samples):
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("need at least one sample")
    return np.sort(s)


def wasserstein1_1d(samples, reference: GridDensity) -> float:
    """``int |F_n(x) - F(x)| dx`` with ``F`` the piecewise-linear grid CDF.

    The integral is exact for that ``F``: on every interval between
    consecutive knots (grid points or samples) ``F_n`` is constant and ``F``
    linear.
    """
    s = _sorted_samples(samples)
    mesh = np.union1d(reference.points, s)
    F = reference.cdf_at(mesh)
    Fn = np.searchsorted(s, mesh[:-1], side="right") / s.size
    d0 = Fn - F[:-1]
    d1 = Fn - F[1:]
    L = np.diff(mesh)
    a0, a1 = np.abs(d0), np.abs(d1)
    same = d0 * d1 >= 0
    denom = np.where(same, 1.0, a0 + a1)
    seg = np.where(same, 0.5 * (a0 + a1), 0.5 * (d0**2 + d1**2) / denom)
    return float(np.sum(L * seg))


def binned_tv(samples, reference: GridDensity, bins: int = 40) -> float:
    """TV between a sample histogram and the reference, on equal bins over the grid span.

    Samples falling outside the grid count fully towards the distance.
    """
    s = _sorted_samples(samples)
    if bins < 1:
        raise ValueError("bins must be positive")
    edges = np.linspace(reference.points[0], reference.points[-1], bins + 1)
    ref = np.diff(reference.cdf_at(edges))
    counts, _ = np.histogram(s, bins=edges)
    emp = counts / s.size
    outside = 1.0 - emp.sum()
    return float(0.5 * (np.sum(np.abs(emp - ref)) + outside))


def ks_statistic(samples, reference_cdf) -> float:
    """``sup_x |F_n(x) - F(x)|``; ``reference_cdf`` is a callable or a :class:`GridDensity`."""
    s = _sorted_samples(samples)
    F = reference_cdf.cdf_at if isinstance(reference_cdf, GridDensity) else reference_cdf
    Fs = np.asarray(F(s), dtype=float)
    n = s.size
    # F_n jumps at each sample; compare both one-sided limits (ties share a jump)
    hi = np.searchsorted(s, s, side="right") / n
    lo = np.searchsorted(s, s, side="left") / n
    return float(max(np.max(np.abs(hi - Fs)), np.max(np.abs(Fs - lo))))

"""Diffusion plug-and-play: alternate proximal consistency and denoising draws.

Each outer iteration ``k`` runs

    x_{k+1/2} ~ exp(L(.; y) - ||. - x_k||^2 / (2 eta_k^2))     (PCS)
    x_{k+1}   ~ p*(x | x + eta_k eps = x_{k+1/2})               (DDS)

For a fixed ``eta`` the chain is reversible with stationary law
``pi_eta ~ p* q_eta``; annealing ``eta_k`` towards zero moves that law
towards the posterior.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dds import dds, truncation_index
from .errors import ConfigurationError, NumericalFailureError
from .pcs import PCSConfig, pcs_linear_gaussian, pcs_mala

__all__ = [
    "AnnealingPlan",
    "DpnpTrace",
    "DpnpProblem",
    "make_geometric_plan",
    "make_constant_plan",
    "validate_plan",
    "run_dpnp",
    "run_many",
    "derive_seed",
    "map_blocks",
]


@dataclass(frozen=True)
class AnnealingPlan:
    """Noise levels ``eta_0, ..., eta_K``; iteration ``k < K`` uses ``eta_k``."""

    etas: tuple
    K_0: int = 0

    def __post_init__(self):
        etas = tuple(float(e) for e in self.etas)
        if len(etas) < 1 or any(not e > 0 for e in etas):
            raise ConfigurationError("annealing levels must be positive and nonempty")
        object.__setattr__(self, "etas", etas)

    @property
    def K(self) -> int:
        return len(self.etas) - 1

    def eta(self, k: int) -> float:
        return self.etas[k]


def make_geometric_plan(eta_0: float, eta_K: float, K_0: int, K: int) -> AnnealingPlan:
    """Hold ``eta_0`` for ``k <= K_0``, then decay geometrically to ``eta_K`` at ``k = K``."""
    if not (0 < eta_K <= eta_0):
        raise ConfigurationError(f"need 0 < eta_K <= eta_0, got eta_0={eta_0}, eta_K={eta_K}")
    if not (0 <= K_0 < K):
        raise ConfigurationError(f"need 0 <= K_0 < K, got K_0={K_0}, K={K}")
    k = np.arange(K + 1)
    frac = np.clip((k - K_0) / (K - K_0), 0.0, 1.0)
    etas = eta_0 * (eta_K / eta_0) ** frac
    etas[-1] = eta_K
    return AnnealingPlan(tuple(etas), K_0)


def make_constant_plan(eta: float, K: int) -> AnnealingPlan:
    if K < 0:
        raise ConfigurationError("K must be nonnegative")
    return AnnealingPlan((float(eta),) * (K + 1), 0)


def validate_plan(plan: AnnealingPlan, schedule) -> None:
    """Reject plans containing a level the schedule cannot denoise."""
    for k in range(plan.K):
        eta = plan.eta(k)
        if truncation_index(schedule, eta) < 1:
            raise ConfigurationError(
                f"eta_{k}={eta} is below the schedule's smallest noise level "
                f"sqrt(1/bar_alpha_1 - 1)={np.sqrt(1 / schedule.bar_alphas[1] - 1):.4g}",
                path=f"annealing.etas[{k}]",
            )


@dataclass
class DpnpTrace:
    """Per-iteration record; ``iterates`` holds ``(k, eta_k, x_half, x_next)``."""

    seed: int | None = None
    iterates: list = field(default_factory=list)
    pcs_acceptance: list = field(default_factory=list)


def _pcs_step(x, y, model, eta, pcs_cfg, pcs_method, rng):
    if pcs_method == "auto":
        pcs_method = "closed_form" if getattr(model, "is_linear_gaussian", False) else "mala"
    if pcs_method == "closed_form":
        return pcs_linear_gaussian(x, y, model, eta, rng), 1.0
    if pcs_method == "mala":
        z, diag = pcs_mala(x, y, model, eta, pcs_cfg, rng)
        return z, diag.acceptance_rate
    raise ConfigurationError(f"unknown PCS method {pcs_method!r}")


def run_dpnp(
    y,
    model,
    oracle,
    schedule,
    plan: AnnealingPlan,
    pcs_cfg: PCSConfig | None = None,
    dds_variant: str = "ddpm",
    init=None,
    rng: np.random.Generator | None = None,
    *,
    n_chains: int | None = None,
    pcs_method: str = "auto",
    trace: str = "full",
    seed: int | None = None,
):
    """Run DPnP for ``plan.K`` iterations.

    Args:
        y: measurements.
        model: forward model providing ``log_likelihood``/``grad_log_likelihood``.
        oracle: unconditional score oracle indexed by ``schedule``.
        plan: annealing levels.
        pcs_cfg: MALA settings (ignored by the closed-form sampler).
        dds_variant: ``"ddpm"`` or ``"ddim"``.
        init: starting point(s); drawn from ``N(0, eta_0/4 I)`` when absent.
        rng: random stream; ``seed`` is only recorded in the trace.
        n_chains: batch size when ``init`` is absent (``None`` gives one ``(d,)`` chain).
        pcs_method: ``"auto"`` (closed form for linear Gaussian models), ``"mala"``
            or ``"closed_form"``.
        trace: ``"full"`` keeps every iterate, ``"final"`` only acceptance rates.

    Returns:
        ``(x_K, DpnpTrace)``.
    """
    pcs_cfg = pcs_cfg or PCSConfig()
    if rng is None:
        rng = np.random.default_rng(seed)
    if trace not in ("full", "final"):
        raise ConfigurationError(f"trace must be 'full' or 'final', got {trace!r}")
    if model.d != oracle.dim:
        raise ConfigurationError(f"model dimension {model.d} != prior dimension {oracle.dim}")
    validate_plan(plan, schedule)

    if init is None:
        shape = (model.d,) if n_chains is None else (n_chains, model.d)
        # the initial spread eta_0 / 4 is read as a variance
        x = np.sqrt(plan.eta(0) / 4.0) * rng.standard_normal(shape)
    else:
        x = np.array(init, dtype=float)

    record = DpnpTrace(seed=seed)
    for k in range(plan.K):
        eta = plan.eta(k)
        try:
            x_half, acc = _pcs_step(x, y, model, eta, pcs_cfg, pcs_method, rng)
            x_next = dds(dds_variant, x_half, oracle, schedule, eta, rng)
        except NumericalFailureError as exc:
            exc.iteration = k
            raise
        if not np.all(np.isfinite(x_next)):
            raise NumericalFailureError("non-finite DDS output", state=x_next, iteration=k)
        record.pcs_acceptance.append(acc)
        if trace == "full":
            record.iterates.append((k, eta, x_half, x_next))
        x = x_next
    return x, record


def derive_seed(master_seed: int, index: int) -> int:
    """Stream seed for block ``index``, independent of how many blocks exist."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class DpnpProblem:
    """Everything :func:`run_dpnp` needs apart from the random stream."""

    y: np.ndarray
    model: object
    oracle: object
    schedule: object
    plan: AnnealingPlan
    pcs_cfg: PCSConfig = PCSConfig()
    dds_variant: str = "ddpm"
    pcs_method: str = "auto"


def _default_workers():
    return max(1, int(os.environ.get("DIFFPNP_WORKERS", "1")))


def map_blocks(fn, n_items: int, seed: int, block_size: int = 256, workers: int | None = None):
    """Evaluate ``fn(block_index, size, rng)`` over consecutive blocks of items.

    Block ``b`` gets its own generator seeded by :func:`derive_seed` ``(seed, b)``;
    results come back in block order however the thread pool schedules them.
    ``workers`` defaults to ``$DIFFPNP_WORKERS`` (or 1).
    """
    if int(n_items) != n_items or n_items < 1:
        raise ConfigurationError(f"chain count must be a positive integer, got {n_items!r}")
    if block_size < 1:
        raise ConfigurationError("block_size must be positive")
    sizes = [min(block_size, n_items - start) for start in range(0, n_items, block_size)]

    def call(b):
        return fn(b, sizes[b], np.random.default_rng(derive_seed(seed, b)))

    workers = workers or _default_workers()
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(call, range(len(sizes)))), sizes
    return [call(b) for b in range(len(sizes))], sizes


def run_many(problem: DpnpProblem, n_chains: int, seed: int, block_size: int = 256, workers: int | None = None):
    """Run ``n_chains`` independent DPnP chains.

    Chains are grouped into blocks of ``block_size`` rows sharing one
    vectorised random stream (see :func:`map_blocks`), so changing
    ``n_chains`` leaves every complete earlier block untouched.

    Returns:
        ``(samples, diagnostics)`` where ``samples`` is ``(n_chains, d)`` and
        ``diagnostics`` holds the mean PCS acceptance per iteration.
    """
    validate_plan(problem.plan, problem.schedule)

    def run_block(b, size, rng):
        try:
            return run_dpnp(
                problem.y, problem.model, problem.oracle, problem.schedule, problem.plan,
                problem.pcs_cfg, problem.dds_variant, rng=rng, n_chains=size,
                pcs_method=problem.pcs_method, trace="final", seed=derive_seed(seed, b),
            )
        except NumericalFailureError as exc:
            exc.chain = b * block_size
            raise

    results, sizes = map_blocks(run_block, n_chains, seed, block_size, workers)
    samples = np.concatenate([x for x, _ in results], axis=0)
    acc = np.zeros(problem.plan.K)
    for (_, tr), n in zip(results, sizes):
        if tr.pcs_acceptance:
            acc += n * np.array([np.mean(a) for a in tr.pcs_acceptance])
    diagnostics = {
        "n_chains": int(n_chains),
        "block_size": int(block_size),
        "block_seeds": [derive_seed(seed, b) for b in range(len(sizes))],
        "pcs_acceptance": (acc / n_chains).tolist(),
    }
    return samples, diagnostics

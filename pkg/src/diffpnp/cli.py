"""Command-line runner: ``python -m diffpnp {denoise,dpnp,verify,kernel} CONFIG``.

Each command writes into the configured output directory:

* ``samples.csv`` (sampling commands): a ``#`` metadata line, a
  ``chain,dim0,...`` header and one row per chain;
* ``metrics.json``: metrics, threshold checks and the same metadata;
* plot-ready CSVs for ``verify`` (grid densities) and ``kernel`` (chi-square
  decay and spectra).

Exit status: 0 when every configured threshold passes, 1 on a threshold
breach, 2 on an invalid configuration, 3 on a numerical failure.  Outputs
depend only on the configuration and seed, not on ``$DIFFPNP_WORKERS``.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, config_hash, load_config
from .dds import dds, truncation_index
from .dpnp import DpnpProblem, map_blocks, run_many, validate_plan
from .errors import ConfigurationError, InsufficientScheduleError, NumericalFailureError, ResolutionError
from .prior import GaussianMixtureOracle, corrupt
from .verify import (
    build_kernel,
    detailed_balance_residual,
    grid_denoising_posterior,
    grid_pi_eta,
    grid_posterior,
    grid_q_eta,
    kernel_spectrum,
    make_grid,
    spectral_analysis,
    stationarity_tv,
    tv_distance,
    wasserstein1_1d,
    binned_tv,
    ks_statistic,
    analytic_gm_linear_posterior,
)

__all__ = ["main", "cmd_denoise", "cmd_dpnp", "cmd_verify", "cmd_kernel"]

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


# -- output helpers ----------------------------------------------------------


def _meta(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "versions": {
            "diffpnp": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path, header, rows, meta):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(r if isinstance(r, str) else _fmt(r) for r in row) + "\n")


def _write_samples(path, samples, meta):
    samples = np.atleast_2d(samples)
    header = ["chain"] + [f"dim{j}" for j in range(samples.shape[1])]
    _write_csv(path, header, ([str(i), *row] for i, row in enumerate(samples)), meta)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _check(checks, name, value, thresholds, *, upper=True):
    """Record a threshold comparison when ``thresholds`` configures ``name``."""
    if name not in thresholds:
        return
    limit = thresholds[name]
    passed = bool(value <= limit) if upper else bool(value >= limit)
    checks.append({"name": name, "value": value, "threshold": limit, "passed": passed})


def _finish(cfg, command, metrics, checks):
    out = cfg.output.dir
    report = {"meta": _meta(cfg, command), "metrics": metrics, "checks": checks,
              "passed": all(c["passed"] for c in checks)}
    _write_json(os.path.join(out, "metrics.json"), report)
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {c['name']} = {c['value']:.6g} (threshold {c['threshold']})")
    if not report["passed"]:
        failed = [c["name"] for c in checks if not c["passed"]]
        print(json.dumps({"failed": failed}), file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def _sample_metrics(x, ref, bins):
    return {
        "w1": wasserstein1_1d(x[:, 0], ref),
        "tv": binned_tv(x[:, 0], ref, bins),
        "ks": ks_statistic(x[:, 0], ref),
    }


def _oracle(cfg, prior, schedule, bias=None):
    base = GaussianMixtureOracle(prior, schedule)
    c = cfg.build_corruption(bias)
    return base if c.is_identity else corrupt(base, c)


def _grid(cfg, prior, eta=0.0):
    return make_grid(prior, cfg.verify.grid_n, cfg.verify.grid_width, eta)


def _reference_eta(cfg, plan):
    if cfg.verify.eta is not None:
        return cfg.verify.eta
    return plan.eta(max(plan.K - 1, 0))


# -- commands ----------------------------------------------------------------


def cmd_denoise(cfg: RunConfig) -> int:
    """Sample the denoising posterior with the configured DDS variant."""
    prior, schedule = cfg.build_prior(), cfg.build_schedule()
    d, eta = prior.dim, cfg.denoise.eta
    if cfg.denoise.x_noisy is None:
        raise ConfigurationError("required for denoise", path="denoise.x_noisy")
    x_noisy = np.asarray(cfg.denoise.x_noisy, dtype=float)
    if x_noisy.shape != (d,):
        raise ConfigurationError(f"must have length {d}", path="denoise.x_noisy")
    if truncation_index(schedule, eta) < 1:
        raise ConfigurationError("below the schedule's smallest noise level", path="denoise.eta")
    oracle = _oracle(cfg, prior, schedule)
    variant = cfg.sampler.dds_variant

    def block(b, size, rng):
        try:
            return dds(variant, np.broadcast_to(x_noisy, (size, d)), oracle, schedule, eta, rng)
        except NumericalFailureError as exc:
            exc.chain = b * cfg.block_size
            raise

    results, _ = map_blocks(block, cfg.chains, cfg.seed, cfg.block_size)
    x = np.concatenate(results, axis=0)
    meta = _meta(cfg, "denoise")
    _write_samples(os.path.join(cfg.output.dir, "samples.csv"), x, meta)
    metrics = {"mean": x.mean(axis=0).tolist(), "var": x.var(axis=0).tolist(), "chains": cfg.chains}
    checks = []
    if d == 1:
        ref = grid_denoising_posterior(prior, float(x_noisy[0]), eta, _grid(cfg, prior, eta))
        metrics.update(_sample_metrics(x, ref, cfg.verify.bins))
        metrics["reference"] = {"mean": ref.mean(), "var": ref.var()}
        for k in ("w1", "tv", "ks"):
            _check(checks, k, metrics[k], cfg.thresholds)
    return _finish(cfg, "denoise", metrics, checks)


def cmd_dpnp(cfg: RunConfig) -> int:
    """Run DPnP chains, optionally sweeping an additive score bias."""
    prior, schedule = cfg.build_prior(), cfg.build_schedule()
    model = cfg.build_model(prior.dim)
    y = cfg.build_measurement(model)
    plan, pcs = cfg.build_plan(), cfg.build_pcs()
    validate_plan(plan, schedule)
    meta = _meta(cfg, "dpnp")

    ref = None
    if prior.dim == 1:
        grid = _grid(cfg, prior)
        if cfg.verify.reference == "posterior":
            ref = grid_posterior(prior, model, y, grid)
        else:
            try:
                ref = grid_pi_eta(prior, model, y, _reference_eta(cfg, plan), grid)
            except ResolutionError as exc:
                raise ConfigurationError(str(exc), path="verify.grid_n") from None

    def run(bias):
        problem = DpnpProblem(y, model, _oracle(cfg, prior, schedule, bias), schedule, plan, pcs,
                              cfg.sampler.dds_variant, cfg.sampler.pcs_method)
        return run_many(problem, cfg.chains, cfg.seed, cfg.block_size)

    metrics, checks = {"chains": cfg.chains, "K": plan.K}, []
    if cfg.robustness.biases:
        sweep = []
        for i, bias in enumerate(cfg.robustness.biases):
            # same seed for every bias: common random numbers isolate the bias effect
            x, diag = run(bias)
            _write_samples(os.path.join(cfg.output.dir, f"samples_bias{i}.csv"), x, meta)
            entry = {"bias": bias, "pcs_acceptance": diag["pcs_acceptance"]}
            if ref is not None:
                entry.update(_sample_metrics(x, ref, cfg.verify.bins))
            sweep.append(entry)
        metrics["robustness"] = sweep
        if ref is not None:
            tvs = [e["tv"] for e in sweep]
            monotone = all(a <= b for a, b in zip(tvs, tvs[1:]))
            metrics["robustness_monotone"] = monotone
            if cfg.thresholds.get("robustness_monotone"):
                checks.append({"name": "robustness_monotone", "value": float(monotone),
                               "threshold": 1.0, "passed": monotone})
    else:
        x, diag = run(None)
        _write_samples(os.path.join(cfg.output.dir, "samples.csv"), x, meta)
        metrics["pcs_acceptance"] = diag["pcs_acceptance"]
        metrics["mean"] = x.mean(axis=0).tolist()
        if ref is not None:
            metrics.update(_sample_metrics(x, ref, cfg.verify.bins))
            for k in ("w1", "tv", "ks"):
                _check(checks, k, metrics[k], cfg.thresholds)
    if ref is not None:
        metrics["reference"] = {"kind": cfg.verify.reference, "mean": ref.mean(), "var": ref.var()}
    return _finish(cfg, "dpnp", metrics, checks)


def _require_1d(prior, command):
    if prior.dim != 1:
        raise ConfigurationError(f"{command} works on one-dimensional problems only", path="prior")


def cmd_verify(cfg: RunConfig) -> int:
    """Grid posterior, smoothed likelihood and ``pi_eta``, with cross-checks."""
    prior = cfg.build_prior()
    _require_1d(prior, "verify")
    model = cfg.build_model(1)
    y = cfg.build_measurement(model)
    eta = _reference_eta(cfg, cfg.build_plan())
    grid = _grid(cfg, prior)
    try:
        q = grid_q_eta(model, y, eta, grid)
        pi = grid_pi_eta(prior, model, y, eta, grid)
    except ResolutionError as exc:
        raise ConfigurationError(str(exc), path="verify.grid_n") from None
    post = grid_posterior(prior, model, y, grid)
    metrics = {
        "eta": eta,
        "tv_pi_posterior": tv_distance(pi, post),
        "pi_posterior_max_abs": float(np.max(np.abs(pi.density - post.density))),
        "posterior": {"mean": post.mean(), "var": post.var()},
        "pi_eta": {"mean": pi.mean(), "var": pi.var()},
    }
    if getattr(model, "is_linear_gaussian", False):
        exact = analytic_gm_linear_posterior(prior, model, y)
        metrics["analytic_max_abs"] = float(np.max(np.abs(np.exp(exact.log_density(grid[:, None])) - post.density)))
    rows = zip(grid, post.density, q.unnormalized, pi.density)
    _write_csv(os.path.join(cfg.output.dir, "grid.csv"), ["x", "posterior", "q_eta", "pi_eta"], rows,
               _meta(cfg, "verify"))
    checks = []
    _check(checks, "tv_pi_posterior", metrics["tv_pi_posterior"], cfg.thresholds)
    _check(checks, "pi_posterior_max_abs", metrics["pi_posterior_max_abs"], cfg.thresholds)
    return _finish(cfg, "verify", metrics, checks)


def cmd_kernel(cfg: RunConfig) -> int:
    """Grid transition kernels: reversibility, stationarity, spectrum, chi-square decay."""
    prior = cfg.build_prior()
    _require_1d(prior, "kernel")
    model = cfg.build_model(1)
    y = cfg.build_measurement(model)
    eta = _reference_eta(cfg, cfg.build_plan())
    if not eta > 0:
        raise ConfigurationError("kernels need a positive eta", path="verify.eta")
    grid = _grid(cfg, prior)
    try:
        K = build_kernel(prior, model, y, eta, grid, "DPnP")
        K_aux = build_kernel(prior, model, y, eta, grid, "AUX")
        pi = grid_pi_eta(prior, model, y, eta, grid)
    except ResolutionError as exc:
        raise ConfigurationError(str(exc), path="verify.grid_n") from None
    ev, ev_aux = kernel_spectrum(K), kernel_spectrum(K_aux)
    lam2, chi2 = spectral_analysis(K, pi=pi, n_steps=cfg.verify.n_steps)
    n = np.arange(chi2.size)
    bound = lam2 ** (2 * n) * chi2[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.where(bound > 0, chi2 / bound - 1.0, np.where(chi2 > 0, np.inf, 0.0))
    metrics = {
        "eta": eta,
        "grid_n": int(grid.size),
        "lambda2": lam2,
        "spectral_gap_top": float(ev[0] - ev[1]),
        "detailed_balance": detailed_balance_residual(K, pi),
        "detailed_balance_exact_stationary": detailed_balance_residual(K, K.stationary),
        "stationarity_tv": stationarity_tv(K, pi),
        "eig_agreement": float(np.max(np.abs(ev - ev_aux))),
        "chi2_bound_slack": float(np.max(slack[1:], initial=-1.0)),
        "chi2": chi2.tolist(),
    }
    meta = _meta(cfg, "kernel")
    _write_csv(os.path.join(cfg.output.dir, "chi2.csv"), ["n", "chi2", "bound", "lambda2"],
               zip(n, chi2, bound, np.full(n.size, lam2)), meta)
    _write_csv(os.path.join(cfg.output.dir, "spectrum.csv"), ["index", "eig_dpnp", "eig_aux"],
               zip(np.arange(ev.size), ev, ev_aux), meta)
    checks = []
    for k in ("detailed_balance", "stationarity_tv", "eig_agreement", "chi2_bound_slack"):
        _check(checks, k, metrics[k], cfg.thresholds)
    return _finish(cfg, "kernel", metrics, checks)


COMMANDS = {"denoise": cmd_denoise, "dpnp": cmd_dpnp, "verify": cmd_verify, "kernel": cmd_kernel}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffpnp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"diffpnp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output.dir = args.out
        os.makedirs(cfg.output.dir, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except (ConfigurationError, InsufficientScheduleError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as exc:
        where = ", ".join(f"{k}={v}" for k, v in (("iteration", exc.iteration), ("chain", exc.chain)) if v is not None)
        print(f"numerical failure: {exc}" + (f" ({where})" if where else ""), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""JSON run configuration.

A configuration file is a JSON object whose top-level sections mirror the
dataclasses below.  Every field has a default, unknown keys are rejected,
and all errors name the offending field as a dotted path (``"model.theta"``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .forward import (
    DownsampleModel,
    FlatModel,
    LinearGaussianModel,
    PhaseRetrievalModel,
    QuantizedSensingModel,
)
from .dpnp import AnnealingPlan, make_constant_plan, make_geometric_plan
from .pcs import DEFAULT_GAMMA_FACTOR, PCSConfig
from .prior import GaussianMixturePrior, ScoreCorruption
from .schedule import make_linear_beta_schedule

__all__ = ["RunConfig", "load_config", "parse_config", "config_hash"]

THRESHOLD_KEYS = {
    "w1", "tv", "ks",
    "tv_pi_posterior", "pi_posterior_max_abs",
    "detailed_balance", "stationarity_tv", "eig_agreement", "chi2_bound_slack",
    "robustness_monotone",
}


@dataclass
class PriorSpec:
    weights: list = field(default_factory=lambda: [1.0])
    means: list = field(default_factory=lambda: [[0.0]])
    variances: list = field(default_factory=lambda: [[1.0]])


@dataclass
class ModelSpec:
    """``kind`` is one of linear, downsample, phase_retrieval, quantized, flat."""

    kind: str = "linear"
    A: list | None = None
    noise_cov: float | list = 1.0
    d: int | None = None
    ratio: int = 4
    noise_var: float = 0.2
    mask: list | None = None
    mask_seed: int = 0
    theta: float = 0.4
    value: float = 0.0


@dataclass
class MeasurementSpec:
    """Either give ``y`` directly or simulate it from ``x_true`` with ``seed``."""

    y: list | None = None
    x_true: list | None = None
    seed: int = 0


@dataclass
class ScheduleSpec:
    T: int = 1000
    beta_1: float = 1e-4
    beta_T: float = 0.02


@dataclass
class SamplerSpec:
    dds_variant: str = "ddpm"
    pcs_method: str = "auto"
    pcs_N: int = 200
    pcs_gamma: float | None = None
    pcs_gamma_factor: float = DEFAULT_GAMMA_FACTOR


@dataclass
class AnnealingSpec:
    """``kind``: geometric, constant (uses ``eta_0`` and ``K``) or explicit (``etas``)."""

    kind: str = "geometric"
    eta_0: float = 0.4
    eta_K: float = 0.15
    K_0: int = 4
    K: int = 20
    etas: list | None = None


@dataclass
class DenoiseSpec:
    x_noisy: list | None = None
    eta: float = 1.0


@dataclass
class CorruptionSpec:
    additive_bias: float | list = 0.0
    relative_noise_scale: float = 0.0
    seed: int = 0


@dataclass
class RobustnessSpec:
    biases: list = field(default_factory=list)


@dataclass
class VerifySpec:
    """``reference`` for dpnp metrics: pi_eta (at the last iteration's eta) or posterior."""

    grid_n: int = 401
    grid_width: float = 8.0
    eta: float | None = None
    reference: str = "pi_eta"
    bins: int = 40
    n_steps: int = 10


@dataclass
class OutputSpec:
    dir: str = "out"


@dataclass
class RunConfig:
    prior: PriorSpec = field(default_factory=PriorSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    measurement: MeasurementSpec = field(default_factory=MeasurementSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    annealing: AnnealingSpec = field(default_factory=AnnealingSpec)
    denoise: DenoiseSpec = field(default_factory=DenoiseSpec)
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    robustness: RobustnessSpec = field(default_factory=RobustnessSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    thresholds: dict = field(default_factory=dict)
    chains: int = 100
    block_size: int = 256
    seed: int = 0

    # -- builders ---------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def build_prior(self) -> GaussianMixturePrior:
        p = self.prior
        with _at("prior"):
            return GaussianMixturePrior(p.weights, p.means, p.variances)

    def build_schedule(self):
        s = self.schedule
        with _at("schedule"):
            return make_linear_beta_schedule(s.T, s.beta_1, s.beta_T)

    def build_model(self, d: int):
        m = self.model
        with _at("model"):
            if m.kind == "linear":
                A = np.eye(d) if m.A is None else np.asarray(m.A, dtype=float)
                return LinearGaussianModel(A, m.noise_cov)
            if m.kind == "downsample":
                return DownsampleModel(d, m.ratio, m.noise_var)
            if m.kind == "phase_retrieval":
                if m.mask is None:
                    return PhaseRetrievalModel.random(d, np.random.default_rng(m.mask_seed), m.noise_var)
                return PhaseRetrievalModel(m.mask, m.noise_var)
            if m.kind == "quantized":
                return QuantizedSensingModel(d, m.theta)
            if m.kind == "flat":
                return FlatModel(d, m.value)
            raise ConfigurationError(f"unknown model kind {m.kind!r}", path="model.kind")

    def build_measurement(self, model):
        ms = self.measurement
        if model.m == 0:
            return None
        if ms.y is not None:
            y = np.asarray(ms.y, dtype=float)
            if y.shape != (model.m,):
                raise ConfigurationError(f"expected {model.m} measurements, got shape {y.shape}", path="measurement.y")
            return y
        if ms.x_true is None:
            raise ConfigurationError("give either y or x_true", path="measurement")
        x_true = np.asarray(ms.x_true, dtype=float)
        if x_true.shape != (model.d,):
            raise ConfigurationError(f"x_true must have length {model.d}", path="measurement.x_true")
        return np.asarray(model.simulate_measurement(x_true, np.random.default_rng(ms.seed)), dtype=float)

    def build_plan(self) -> AnnealingPlan:
        a = self.annealing
        with _at("annealing"):
            if a.kind == "geometric":
                return make_geometric_plan(a.eta_0, a.eta_K, a.K_0, a.K)
            if a.kind == "constant":
                return make_constant_plan(a.eta_0, a.K)
            if a.kind == "explicit":
                if not a.etas:
                    raise ConfigurationError("explicit plans need etas", path="annealing.etas")
                return AnnealingPlan(tuple(a.etas))
            raise ConfigurationError(f"unknown plan kind {a.kind!r}", path="annealing.kind")

    def build_pcs(self) -> PCSConfig:
        s = self.sampler
        with _at("sampler"):
            return PCSConfig(N=s.pcs_N, gamma=s.pcs_gamma, gamma_factor=s.pcs_gamma_factor)

    def build_corruption(self, bias=None) -> ScoreCorruption:
        c = self.corruption
        with _at("corruption"):
            return ScoreCorruption(
                additive_bias=c.additive_bias if bias is None else bias,
                relative_noise_scale=c.relative_noise_scale,
                seed=c.seed,
            )

    def validate(self) -> None:
        """Check ranges and build every component once so errors surface before any run."""
        _positive_int(self.chains, "chains")
        _positive_int(self.block_size, "block_size")
        _positive_int(self.schedule.T, "schedule.T")
        _positive_int(self.sampler.pcs_N, "sampler.pcs_N")
        _positive_int(self.verify.grid_n, "verify.grid_n")
        _positive_int(self.verify.bins, "verify.bins")
        if self.verify.n_steps < 0:
            raise ConfigurationError("must be nonnegative", path="verify.n_steps")
        if self.sampler.dds_variant not in ("ddpm", "ddim"):
            raise ConfigurationError("must be 'ddpm' or 'ddim'", path="sampler.dds_variant")
        if self.sampler.pcs_method not in ("auto", "mala", "closed_form"):
            raise ConfigurationError("must be 'auto', 'mala' or 'closed_form'", path="sampler.pcs_method")
        if self.verify.reference not in ("pi_eta", "posterior"):
            raise ConfigurationError("must be 'pi_eta' or 'posterior'", path="verify.reference")
        if self.verify.eta is not None and self.verify.eta < 0:
            raise ConfigurationError("must be nonnegative", path="verify.eta")
        if not self.denoise.eta > 0:
            raise ConfigurationError("must be positive", path="denoise.eta")
        for k, v in self.thresholds.items():
            if k not in THRESHOLD_KEYS:
                raise ConfigurationError(f"unknown threshold (known: {sorted(THRESHOLD_KEYS)})", path=f"thresholds.{k}")
            if not isinstance(v, (int, float)):
                raise ConfigurationError("must be a number or boolean", path=f"thresholds.{k}")
        prior = self.build_prior()
        self.build_schedule()
        model = self.build_model(prior.dim)
        if model.d != prior.dim:
            raise ConfigurationError(f"model dimension {model.d} != prior dimension {prior.dim}", path="model")
        self.build_plan()
        self.build_pcs()
        self.build_corruption()
        for i, b in enumerate(self.robustness.biases):
            if not isinstance(b, (int, float)):
                raise ConfigurationError("must be a number", path=f"robustness.biases[{i}]")


class _at:
    """Prefix configuration errors raised inside the block with a field path."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is not None and isinstance(exc, ValueError) and not getattr(exc, "path", None):
            raise ConfigurationError(str(exc), path=self.path) from exc
        return False


def _positive_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigurationError(f"must be a positive integer, got {v!r}", path=path)


def _check_type(value, hint, path):
    """Loose structural check for JSON values against a field annotation."""
    if value is None:
        if type(None) in typing.get_args(hint) or hint is type(None):
            return value
        raise ConfigurationError("may not be null", path=path)
    options = typing.get_args(hint) if typing.get_origin(hint) in (typing.Union, _UnionType) else (hint,)
    for opt in options:
        base = typing.get_origin(opt) or opt
        if base is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if base is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if base in (str, list, dict, bool) and isinstance(value, base):
            return value
    names = ", ".join(getattr(o, "__name__", str(o)) for o in options)
    raise ConfigurationError(f"expected {names}, got {type(value).__name__}", path=path)


try:
    from types import UnionType as _UnionType
except ImportError:  # pragma: no cover
    _UnionType = typing.Union


def _load(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigurationError("expected an object", path=path or None)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigurationError("unknown field", path=where)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _load(hint, data[f.name], sub)
        else:
            kwargs[f.name] = _check_type(data[f.name], hint, sub)
    return cls(**kwargs)


def parse_config(data: dict) -> RunConfig:
    cfg = _load(RunConfig, data, "")
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON: {exc}") from None
    return parse_config(data)


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the fully resolved configuration, excluding seed and output location."""
    d = cfg.to_dict()
    d.pop("seed")
    d.pop("output")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()

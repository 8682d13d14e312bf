"""Posterior sampling for inverse problems with a diffusion prior and plug-and-play splitting."""

from .dds import dds, dds_ddim, dds_ddpm, truncation_index
from .dpnp import (
    AnnealingPlan,
    DpnpProblem,
    DpnpTrace,
    make_constant_plan,
    make_geometric_plan,
    run_dpnp,
    run_many,
)
from .errors import (
    ConfigurationError,
    DomainCoverageError,
    InsufficientScheduleError,
    NumericalFailureError,
    OrderingError,
    ResolutionError,
    ScheduleIndexError,
    ShapeError,
    SingularScoreError,
    UndefinedNoiseError,
)
from .forward import (
    DownsampleModel,
    FlatModel,
    LinearGaussianModel,
    PhaseRetrievalModel,
    QuantizedSensingModel,
)
from .pcs import PCSConfig, pcs_linear_gaussian, pcs_mala
from .prior import GaussianMixtureOracle, GaussianMixturePrior, ScoreCorruption, corrupt
from .schedule import DiffusionSchedule, make_linear_beta_schedule

__version__ = "0.1.0"

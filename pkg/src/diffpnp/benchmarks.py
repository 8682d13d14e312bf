"""Small 1-D problems with exact or grid-exact answers.

These are the reference problems used by the acceptance suite, the demos and
the example CLI configurations.  Each returns a :class:`Benchmark` holding
everything needed to run a sampler and to build its ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import LinearGaussianModel, MeasurementModel, QuantizedSensingModel
from .prior import GaussianMixturePrior

__all__ = [
    "Benchmark",
    "gaussian_denoising",
    "mixture_denoising",
    "bimodal_linear",
    "sharp_linear",
    "quantized_sensing",
]


@dataclass(frozen=True, eq=False)
class Benchmark:
    name: str
    prior: GaussianMixturePrior
    eta: float
    model: MeasurementModel | None = None
    y: np.ndarray | None = None
    x_noisy: float | None = None


def gaussian_denoising() -> Benchmark:
    """Standard normal prior seen through unit noise at ``x_noisy = 2``; posterior ``N(1, 1/2)``."""
    return Benchmark("gaussian_denoising", GaussianMixturePrior.standard_normal(1), eta=1.0, x_noisy=2.0)


def mixture_denoising() -> Benchmark:
    """Unbalanced two-component prior at noise level 0.8."""
    prior = GaussianMixturePrior([0.3, 0.7], [-1.5, 1.0], [0.2, 0.3])
    return Benchmark("mixture_denoising", prior, eta=0.8, x_noisy=0.2)


def bimodal_linear() -> Benchmark:
    """Well-separated modes under a weak observation.

    At ``eta = 0.3`` the DPnP kernel has second eigenvalue about 0.93, so
    relaxing the mode weights from the symmetric start takes tens of
    iterations.
    """
    prior = GaussianMixturePrior([0.5, 0.5], [-1.0, 1.0], [0.1, 0.1])
    model = LinearGaussianModel([[1.0]], 0.5)
    return Benchmark("bimodal_linear", prior, eta=0.3, model=model, y=np.array([0.6]))


def sharp_linear() -> Benchmark:
    """Informative observation, so ``pi_eta`` visibly depends on ``eta``."""
    prior = GaussianMixturePrior([0.4, 0.6], [-1.2, 1.0], [0.3, 0.2])
    model = LinearGaussianModel([[1.0]], 0.05)
    return Benchmark("sharp_linear", prior, eta=0.3, model=model, y=np.array([0.3]))


def quantized_sensing() -> Benchmark:
    """One dithered bit ``y = +1`` of a two-mode signal, ``theta = 0.4``."""
    prior = GaussianMixturePrior([0.5, 0.5], [-0.8, 0.8], [0.25, 0.25])
    return Benchmark("quantized_sensing", prior, eta=0.05, model=QuantizedSensingModel(1, 0.4), y=np.array([1.0]))

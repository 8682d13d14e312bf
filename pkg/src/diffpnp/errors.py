"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter or configuration field is out of its valid range.

    ``path`` names the offending configuration field when the error comes
    from a run configuration file (e.g. ``"schedule.T"``).
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ScheduleIndexError(IndexError):
    """A diffusion step index lies outside ``[0, T]``."""


class OrderingError(ValueError):
    """Integration end time precedes its start time."""


class SingularScoreError(ValueError):
    """Score requested at zero noise for a degenerate (zero-variance) component."""


class UndefinedNoiseError(ValueError):
    """Noise function requested at step 0, where no noise has been injected."""


class ShapeError(ValueError):
    """Array dimensions do not match the model or prior."""


class InsufficientScheduleError(ValueError):
    """The diffusion schedule cannot represent the requested noise level."""


class NumericalFailureError(FloatingPointError):
    """A sampler hit a non-finite value.

    Attributes:
        state: the offending iterate.
        iteration: outer iteration index, when raised from the DPnP driver.
    """

    def __init__(self, message, state=None, iteration=None, chain=None):
        self.state = state
        self.iteration = iteration
        self.chain = chain
        super().__init__(message)


class ResolutionError(ValueError):
    """Grid spacing too coarse for the requested convolution width."""


class DomainCoverageError(ValueError):
    """A grid density vanished everywhere on the grid."""

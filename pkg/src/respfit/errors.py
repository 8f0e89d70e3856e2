"""Exception hierarchy shared by all respfit modules."""


class RespfitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RespfitError):
    """Invalid or inconsistent experiment configuration."""


class ModelError(RespfitError):
    """Bad model input: parameters outside the box, non-finite state, etc."""


class UnsupportedCapabilityError(RespfitError):
    """The model does not declare the capability an operation needs."""


class SimulationError(RespfitError):
    """Trajectory generation failed (typically a blow-up)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StatsError(RespfitError):
    """Statistical estimation failed (too few samples, bad lag grid, ...)."""


class SurrogateError(RespfitError):
    """Surrogate construction or evaluation failed."""


class EstimationError(RespfitError):
    """The least-squares estimation produced no usable result."""

"""Exception hierarchy shared across the package."""


class SPDNNError(Exception):
    """Base class for all package errors."""


class ShapeError(SPDNNError, ValueError):
    """Input or parameter vector has the wrong shape."""


class ConfigError(SPDNNError, ValueError):
    """Invalid configuration (bad tuning exponent, unknown loss string, ...)."""


class DomainError(SPDNNError, ValueError):
    """Argument outside the mathematical domain of a function."""


class InvalidLabelError(SPDNNError, ValueError):
    """Classification label not in {-1, +1}."""


class DegenerateSampleError(SPDNNError, ValueError):
    """Effective sample size too small for the requested formula."""


class DegenerateConstructionError(SPDNNError, ValueError):
    """Lower-bound construction cannot be built at this sample size."""


class PackingFailure(SPDNNError, RuntimeError):
    """Hamming packing search ran out of budget."""


class TrainingFailure(SPDNNError, RuntimeError):
    """Every restart of a fit diverged. ``traces`` holds what was recorded."""

    def __init__(self, message, traces=None):
        super().__init__(message)
        self.traces = traces or []


class ExplosionError(SPDNNError, RuntimeError):
    """A simulated trajectory left the finite range."""


class StabilityError(SPDNNError, ValueError):
    """Process parameters fail their stability certificate."""


class ModelContractError(SPDNNError, ValueError):
    """A model's probability or range contract is violated."""


class EstimationSupportError(SPDNNError, RuntimeError):
    """No held-out windows fell inside the estimation domain."""


class ProbeFailure(SPDNNError, RuntimeError):
    """Too many Monte-Carlo excess estimates were non-positive."""


class InsufficientPointsError(SPDNNError, ValueError):
    """Fewer than two usable points for a slope fit."""

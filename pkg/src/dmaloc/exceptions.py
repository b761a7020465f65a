"""Exception types shared across the simulator."""


class DmalocError(Exception):
    """Base class for all simulator errors."""


class ConfigError(DmalocError):
    """Invalid scenario configuration or CLI input (exit code 2)."""


class DegenerateGeometryError(DmalocError):
    """A user position coincides with (or is pathologically close to) a panel element."""


class SingularCovarianceError(DmalocError):
    """The RF-chain noise covariance has a zero diagonal entry (dark microstrip)."""


class UnidentifiableConfigurationError(DmalocError):
    """Fisher matrix too ill-conditioned to invert for a position error bound.

    Carries the near-null-space eigenvector so callers can report which
    parameters are (jointly) unobservable.
    """

    def __init__(self, message, direction=None, condition=None):
        super().__init__(message)
        self.direction = direction
        self.condition = condition


class InfeasibleSearchError(DmalocError):
    """A discrete search would exceed its configured work cap."""

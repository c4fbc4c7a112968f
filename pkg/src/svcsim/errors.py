"""Exception taxonomy shared across the package.

Every failure that carries a CLI exit-code category derives from
:class:`SvcSimError` and sets ``category``.
"""


class SvcSimError(Exception):
    """Base class for all package errors."""

    category = "error"
    exit_code = 1


class ConfigError(SvcSimError):
    """Scenario configuration failed validation."""

    category = "config"
    exit_code = 2


class HistoryUnderrunError(SvcSimError):
    """A signal history was asked for samples older than it holds."""


class NormalizationError(SvcSimError):
    """A polynomial whose leading coefficient is singular cannot be made monic."""


class IllConditionedSolveError(SvcSimError):
    """The controller's leading-block solve left a residual above tolerance."""


class PlantDivergenceError(SvcSimError):
    """Plant state became non-finite during integration."""

    category = "divergence"
    exit_code = 3

    def __init__(self, message, t=None, k=None):
        super().__init__(message)
        self.t = t
        self.k = k


class MonitorViolationError(SvcSimError):
    """The BIBO monitor bound was exceeded."""

    category = "monitor"
    exit_code = 4

    def __init__(self, message, t=None, k=None):
        super().__init__(message)
        self.t = t
        self.k = k

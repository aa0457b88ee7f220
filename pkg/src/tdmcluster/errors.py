"""Exception hierarchy shared by all modules."""


class TDMClusterError(Exception):
    """Base class for package errors."""


class ParameterError(TDMClusterError, ValueError):
    """A physical parameter lies outside its domain."""


class SizeError(TDMClusterError, ValueError):
    """Too few samples, frames or values for the requested operation."""


class ShapeError(TDMClusterError, ValueError):
    """Traces that must be combined disagree in length or sample rate."""


class ConfigurationError(TDMClusterError, ValueError):
    """An inconsistent configuration (rates, delays, tone frequencies, ...)."""


class NormalizationError(TDMClusterError, ArithmeticError):
    """Shot-noise reference is degenerate."""


class IncompleteDataError(TDMClusterError, KeyError):
    """A required basis label or coefficient is missing."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CoverageError(TDMClusterError, ValueError):
    """A report does not cover the temporal indices under test."""


class BoundaryError(TDMClusterError, ValueError):
    """Temporal index outside the domain where an object is defined."""


class RegularizationWarning(UserWarning):
    """Deconvolution relied heavily on the regularization floor."""


class NonZeroMeanWarning(UserWarning):
    """A nullifier sample mean differs from zero by more than 5 standard errors."""

"""Exception types raised across the package."""


class QuenchedLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QuenchedLabError, ValueError):
    pass


class DistributionError(ConfigurationError):
    """A probability vector or stochastic matrix is malformed."""


class RangeError(QuenchedLabError, IndexError):
    """A requested offset lies outside the realized window of the driving path."""

    def __init__(self, message, missing=None):
        super().__init__(message)
        self.missing = missing


class DomainError(QuenchedLabError, ValueError):
    pass


class ModelViolationError(QuenchedLabError, ValueError):
    """A standing hypothesis on the maps (expansion, tiling, ...) fails."""


class PreconditionError(QuenchedLabError, ValueError):
    pass


class ShapeError(PreconditionError):
    pass


class NumericalError(QuenchedLabError, ArithmeticError):
    pass


class DivisionError(NumericalError):
    """Division by a density whose essential infimum is not bounded away from zero."""


class FitError(QuenchedLabError, ValueError):
    pass


class SamplingError(QuenchedLabError, RuntimeError):
    pass


class DiagnosticError(QuenchedLabError, RuntimeError):
    pass


class DegenerateVarianceError(QuenchedLabError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass

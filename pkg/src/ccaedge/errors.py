"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class SingularCorrelationError(ArithmeticError):
    """A (regularized) autocorrelation matrix is too ill-conditioned to invert."""


class NonIdentifiableError(ValueError):
    """A mixture does not carry enough rank/samples to be unmixed."""


class EnumerationLimitError(ValueError):
    """An exhaustive search was requested beyond its configured cap."""


class ScenarioError(ValueError):
    """A scenario file or field failed to parse or validate."""

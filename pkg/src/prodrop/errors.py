"""Exception hierarchy shared by every module of the package."""


class ProdropError(Exception):
    """Base class for all package errors."""


class ValidationError(ProdropError):
    """Input data violates a documented invariant."""


class ParseError(ValidationError):
    """A corpus record could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ProdropError):
    """A configuration value is out of range or unknown."""


class DimensionError(ProdropError):
    """Operand shapes are incompatible."""


class InvalidMaskError(ProdropError):
    """A softmax mask leaves no admissible position."""


class DomainError(ProdropError):
    """A value falls outside the domain of a function (e.g. log of zero)."""


class NumericalError(ProdropError):
    """NaN or infinity produced, or a numerical check failed."""

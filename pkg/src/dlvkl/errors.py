"""Exception types raised across the package."""


class DLVKLError(Exception):
    """Base class for all package errors."""


class FactorizationFailure(DLVKLError, ArithmeticError):
    """Cholesky factorization failed after every jitter attempt."""


class DimensionMismatch(DLVKLError, ValueError):
    pass


class NonFiniteLoss(DLVKLError, FloatingPointError):
    pass


class NonFiniteGradient(DLVKLError, FloatingPointError):
    pass


class InvalidLabel(DLVKLError, ValueError):
    pass


class ProjectionNotFitted(DLVKLError, RuntimeError):
    pass


class EmptyDataset(DLVKLError, ValueError):
    pass


class ParseError(DLVKLError, ValueError):
    """A delimited-text file could not be parsed.

    The offending 1-based line number is kept on ``line``.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaMismatch(DLVKLError, ValueError):
    pass


class ConfigError(DLVKLError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class UnknownCase(DLVKLError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""

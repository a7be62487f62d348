"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Inconsistent shapes, block structure, or configuration."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf or a numerical procedure failed.

    The message carries the offending term so solver failures are
    diagnosable from logs alone.
    """


class CurvatureError(NumericError):
    """A block subproblem is not strongly convex for the current tau."""


class UnsupportedConfigError(StructuralError):
    """A (backend, regularizer, approximation) combination with no
    implemented solution path."""


class ParseError(ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

"""Exception hierarchy for wedge-kit."""

from __future__ import annotations


class WedgeError(Exception):
    """Base class for every error raised by wedge-kit."""


class ConfigError(WedgeError, ValueError):
    """Invalid configuration value or file."""


class ShapeError(WedgeError, ValueError):
    """Array dimensions do not conform."""


class ValidationError(WedgeError, ValueError):
    """An input value violates a documented invariant."""


class DegenerateAffinityError(WedgeError, ArithmeticError):
    """The affinity matrix sums to zero, so the alignment objective is undefined."""


class NumericError(WedgeError, ArithmeticError):
    """A numerical routine failed (for example SVD non-convergence)."""


class EmptySupervisionError(WedgeError, ValueError):
    """Every pixel of a label map is IGNORE."""


class EvaluationError(WedgeError, ValueError):
    """Metrics were requested from an empty confusion matrix."""


class ManifestError(WedgeError, ValueError):
    """A corpus manifest could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingDataError(WedgeError):
    """A dataset or artifact the command needs is not on disk."""

    def __init__(self, path, hint: str = ""):
        self.path = path
        message = f"missing required path: {path}"
        if hint:
            message = f"{message} ({hint})"
        super().__init__(message)

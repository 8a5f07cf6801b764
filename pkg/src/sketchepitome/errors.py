"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, violated internal invariants exit 3.
"""


class SketchEpitomeError(Exception):
    """Base class for all package-specific errors."""


class ParseError(SketchEpitomeError, ValueError):
    """A sketch file (JSON or SVG) could not be parsed.

    ``code`` identifies the failure kind so callers can distinguish, e.g.,
    a malformed document from an out-of-extent coordinate.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class DataError(SketchEpitomeError):
    """Input data violates a documented precondition (bad dataset layout,
    category too small for a split, unknown model version, ...)."""


class ConfigError(DataError):
    """A configuration file or value failed validation."""


class InvariantError(SketchEpitomeError):
    """An internal consistency check failed; indicates a bug, not bad input."""

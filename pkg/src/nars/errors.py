"""Exception types shared across the package."""


class NarsError(Exception):
    """Base class for all package errors."""


class SpaceParseError(NarsError):
    """A space file is syntactically or semantically malformed.

    Carries the offending field path (e.g. ``stages[2].channels``) so
    errors point at the exact entry in the file.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ValidationError(NarsError):
    """A candidate (or one of its fields) is off the search-space grid."""

    def __init__(self, parameter: str, message: str):
        self.parameter = parameter
        super().__init__(f"{parameter}: {message}")


class ShapeError(NarsError):
    """Input dimensions do not match the network or encoding layout."""


class UndefinedCorrelationError(NarsError):
    """Rank correlation is undefined (a constant input sequence)."""


class ProtocolError(NarsError):
    """The evaluator wire protocol was violated."""

    def __init__(self, message: str, line: str | None = None):
        self.line = line
        super().__init__(message if line is None else f"{message}: {line!r}")


class CheckpointError(NarsError):
    """A checkpoint is unreadable or inconsistent with the current run."""


class UsageError(NarsError):
    """Bad command-line arguments or run configuration."""

"""Exception types shared across the package."""


class TaintRankError(Exception):
    """Base class for all domain errors raised by this package."""


class UnknownNodeError(TaintRankError, KeyError):
    """A node id or label does not exist in the graph."""

    def __str__(self) -> str:
        return Exception.__str__(self)


class MalformedRecordError(TaintRankError, ValueError):
    """A transaction record (or edgelist row) could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ConfigError(TaintRankError, ValueError):
    """Invalid parameters or configuration."""

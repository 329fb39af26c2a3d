"""Exception types shared across the package."""


class NsebError(Exception):
    """Base class for library errors."""


class DomainError(NsebError, ValueError):
    """An argument lies outside the domain of the operation."""


class CapacityError(NsebError, MemoryError):
    """A request exceeds a configured size limit."""


class ConfigError(NsebError, ValueError):
    """A schedule or run configuration is malformed."""

    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        if source is not None:
            message = f"{source}: {message}"
        super().__init__(message)


class InsufficientDataError(NsebError, ValueError):
    """Not enough samples for a statistical estimate."""


class InfeasibleCodebook(NsebError, ValueError):
    """No codebook exists for the requested parameters."""


class NotGoodError(NsebError, KeyError):
    """A word lies outside the good set of a codebook."""


class WindowWarning(UserWarning):
    """A window is too short or lacks the structure an operation needs."""

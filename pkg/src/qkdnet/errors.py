"""Exception hierarchy shared by every qkdnet module."""


class QKDNetError(Exception):
    """Base class for all errors raised by qkdnet."""


class DomainError(QKDNetError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(QKDNetError, ValueError):
    """Invalid configuration or parameter set."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ValidationError(QKDNetError, ValueError):
    """A density matrix (or other value object) violates its invariants."""


class NumericError(QKDNetError, ArithmeticError):
    """A numerical routine produced an unusable result."""


class RequestError(QKDNetError):
    """Malformed switch request (self-link, unknown user, ...)."""


class BusyError(RequestError):
    """A user named in a request already holds an active link."""


class StateError(QKDNetError):
    """Operation is not valid in the current switch state."""


class FormatError(QKDNetError, ValueError):
    """Malformed time-tag file. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class EstimateError(QKDNetError, ValueError):
    """A statistic is undefined because its sample is empty."""

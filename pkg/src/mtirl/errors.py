"""Exception types shared across the package."""


class MtirlError(Exception):
    """Base class for package errors."""


class InvalidArgument(MtirlError, ValueError):
    pass


class NumericError(MtirlError, FloatingPointError):
    pass


class UnsupportedMode(MtirlError, ValueError):
    pass


class InvalidState(MtirlError, RuntimeError):
    pass


class DataError(MtirlError, ValueError):
    """Malformed dataset or model file."""


class ConfigError(MtirlError, ValueError):
    pass


class ConvergenceError(MtirlError, RuntimeError):
    pass

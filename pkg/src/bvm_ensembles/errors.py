"""Exception hierarchy. The CLI maps each class to a process exit code."""


class BvmError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BvmError, ValueError):
    """Bad configuration or command-line usage."""

    exit_code = 1


class DataError(BvmError, ValueError):
    """Unreadable, malformed or degenerate input data."""

    exit_code = 2


class NumericalError(BvmError, ArithmeticError):
    """Non-finite loss, gradient or prediction."""

    exit_code = 3

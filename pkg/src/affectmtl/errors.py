"""Exception hierarchy mapped to CLI exit codes."""


class AffectMTLError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(AffectMTLError):
    """Invalid configuration or command usage."""

    exit_code = 1


class DataError(AffectMTLError):
    """Unreadable, malformed, or inconsistent input data."""

    exit_code = 2


class NumericalError(AffectMTLError):
    """Numerical failure: non-finite loss, failed gradient check, etc."""

    exit_code = 3

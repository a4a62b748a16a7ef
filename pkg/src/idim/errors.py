"""Exceptions raised by idim."""


class IdimError(Exception):
    """Base class for all idim errors."""


class DataError(IdimError, ValueError):
    """The input data cannot be used (non-finite values, too few points, ...)."""


class ConfigError(IdimError, ValueError):
    """An argument or configuration value is out of its domain."""

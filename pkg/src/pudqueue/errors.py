from __future__ import annotations


class PudError(Exception):
    """Base class for errors raised by pudqueue."""


class ArgumentError(PudError, ValueError):
    """Malformed argument: bad spec string, index out of range, empty budget."""


class ConfigError(PudError, ValueError):
    """Invalid configuration values."""


class InstabilityError(ConfigError):
    """Offered load too high for an infinite-buffer queue."""


class DomainError(PudError, ArithmeticError):
    """Quantity undefined or divergent at the requested point."""

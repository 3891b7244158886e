"""Exception hierarchy shared by every module.

The CLI maps :class:`ConfigError`, :class:`DimensionError` and
:class:`LoadError` to exit code 1 and everything else to exit code 2.
"""


class DeciError(Exception):
    pass


class ConfigError(DeciError, ValueError):
    """Invalid setting or argument (bad kernel size, probability, permutation...)."""


class DimensionError(DeciError, ValueError):
    """Operands whose shapes do not agree."""


class LoadError(DeciError):
    """Malformed or inconsistent on-disk data."""


class NumericError(DeciError, ArithmeticError):
    """Non-finite values where finite ones are required."""

"""Argument checks shared by the estimators, trainers and CLI."""

from numbers import Integral, Real


class UsageError(ValueError):
    """Raised when a caller violates an operation's preconditions."""


class LayoutError(UsageError):
    """Raised when a grid layout breaks one of its structural invariants."""


def check_learning_rate(value, name="lr"):
    if not isinstance(value, Real) or not 0.0 < value <= 1.0:
        raise UsageError(f"{name} must be in (0, 1], got {value!r}")
    return float(value)


def check_discount(value, name="gamma"):
    if not isinstance(value, Real) or not 0.0 <= value < 1.0:
        raise UsageError(f"{name} must be in [0, 1), got {value!r}")
    return float(value)


def check_probability(value, name="epsilon"):
    if not isinstance(value, Real) or not 0.0 <= value <= 1.0:
        raise UsageError(f"{name} must be in [0, 1], got {value!r}")
    return float(value)


def check_count(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, Integral) or value < minimum:
        raise UsageError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_optional_count(value, name, minimum=1):
    if value is None:
        return None
    return check_count(value, name, minimum)

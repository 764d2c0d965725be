"""Small input-validation helpers shared by the config loader and estimators."""

from __future__ import annotations

import math
import numbers


class ConfigError(ValueError):
    """Raised when a user-supplied parameter violates its contract."""


class ProtocolViolation(RuntimeError):
    """Raised when an internal protocol invariant is broken."""


def check_unit_interval(value, name, *, open_low=False, open_high=False):
    if not isinstance(value, numbers.Real) or math.isnan(value):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    low_ok = value > 0 if open_low else value >= 0
    high_ok = value < 1 if open_high else value <= 1
    if not (low_ok and high_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ConfigError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return float(value)


def check_positive(value, name, *, strict=True):
    if not isinstance(value, numbers.Real) or math.isnan(value):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    if (strict and value <= 0) or (not strict and value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ConfigError(f"{name} must be {bound}, got {value!r}")
    return value


def check_int(value, name, *, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_byzantine_bound(n_validators, f):
    """Check M >= 2f+2 and f <= floor(M/2) - 1 for the community layout."""
    check_int(n_validators, "M", minimum=2)
    check_int(f, "f", minimum=0)
    if f > n_validators // 2 - 1:
        raise ConfigError(
            f"f={f} exceeds the Byzantine bound floor(M/2)-1={n_validators // 2 - 1} "
            f"for M={n_validators}"
        )
    return n_validators, f

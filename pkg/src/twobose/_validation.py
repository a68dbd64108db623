"""Small argument checks shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_is_fitted

__all__ = ["check_is_fitted", "check_positive", "check_int", "check_seed", "check_choice", "check_unit_ratio"]


def check_positive(value, name: str, allow_zero: bool = False) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}, got {value!r}")
    return float(value)


def check_int(value, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(seed) -> int | None:
    if seed is None:
        return None
    return check_int(seed, "seed", minimum=0)


def check_choice(value, name: str, choices) -> str:
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_unit_ratio(c, name: str = "ratio") -> float:
    c = check_positive(c, name)
    if not c < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {c}")
    return c

"""
Input validation utilities for geometry and analysis parameters
"""

import math
from typing import Sequence, Tuple

from .errors import DomainError


def validate_positive(value: float, name: str) -> float:
    """Validate a strictly positive finite number"""
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be > 0, got {value}")
    return value


def validate_non_negative(value: float, name: str) -> float:
    """Validate a finite number >= 0"""
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"{name} must be >= 0, got {value}")
    return value


def validate_positive_int(value: int, name: str) -> int:
    """Validate an integer >= 1"""
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value}")
    return int(value)


def validate_vector3(value: Sequence[float], name: str) -> Tuple[float, float, float]:
    """Validate a 3-vector of finite numbers"""
    try:
        x, y, z = (float(v) for v in value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a 3-vector, got {value!r}")
    if not all(math.isfinite(v) for v in (x, y, z)):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return (x, y, z)


def validate_axis(axis: str) -> int:
    """Resolve an axis name (x, y, z) to its array index"""
    if not axis or not str(axis).strip():
        raise DomainError("Axis cannot be empty")

    axis = str(axis).strip().lower()
    valid_axes = {"x": 0, "y": 1, "z": 2}
    if axis in valid_axes:
        return valid_axes[axis]

    suggestions = ", ".join(valid_axes)
    raise DomainError(f"Axis '{axis}' not found. Valid axes: {suggestions}")

"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

import math

import numpy as np


class ValidationError(ValueError):
    """Raised when an argument violates a documented precondition."""


def check_matrix(m, name="matrix", *, nonnegative=False, square=False) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if nonnegative and np.any(arr < 0):
        raise ValidationError(f"{name} must be non-negative")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_vector(v, name="vector", *, size=None, nonnegative=False, positive=False) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValidationError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if positive and np.any(arr <= 0):
        raise ValidationError(f"{name} must be strictly positive")
    if nonnegative and np.any(arr < 0):
        raise ValidationError(f"{name} must be non-negative")
    return arr


def check_positive(x, name) -> float:
    x = float(x)
    if not (math.isfinite(x) and x > 0):
        raise ValidationError(f"{name} must be a positive real, got {x!r}")
    return x


def check_nonnegative(x, name) -> float:
    x = float(x)
    if not (math.isfinite(x) and x >= 0):
        raise ValidationError(f"{name} must be a non-negative real, got {x!r}")
    return x


def check_positive_int(x, name, minimum=1) -> int:
    if isinstance(x, bool) or int(x) != x:
        raise ValidationError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if x < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {x}")
    return x


def check_kappa(kappa) -> float:
    kappa = float(kappa)
    if not 0 < kappa <= 1:
        raise ValidationError(f"kappa must lie in (0, 1], got {kappa}")
    return kappa


def check_l(l) -> float:
    l = float(l)
    if not 0 <= l < 1:
        raise ValidationError(f"l must lie in [0, 1), got {l}")
    return l

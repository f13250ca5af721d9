"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


class OamError(Exception):
    """Base class for errors raised by oamlink."""


class GeometryError(OamError):
    """Geometrically impossible configuration or internal invariant breach."""


class FarFieldError(OamError, ValueError):
    """Far-field approximation requested outside its validity guard."""


class DegenerateSignalError(OamError):
    """Training signal carries a zero entry or no usable energy."""


class EstimationError(OamError):
    """A stage of the pose estimator failed; ``stage`` names it."""

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.stage = stage


class AmbiguityError(EstimationError):
    """Distance ambiguity could not be resolved from the prior window."""


class ConditioningError(OamError):
    """A detector gain is numerically unusable; ``modes`` lists the culprits."""

    def __init__(self, message, modes=()):
        super().__init__(message)
        self.modes = tuple(modes)


def check_positive(value, name, integer=False):
    if integer:
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            raise TypeError(f"{name} must be an integer, got {value!r}")
    elif not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return int(value) if integer else float(value)


def check_finite(value, name):
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def check_complex_array(x, name, ndim=None, shape=None, allow_zero=True):
    """Coerce ``x`` to a finite complex ndarray and check its layout.

    ``shape`` may contain ``None`` wildcards.
    """
    arr = np.asarray(x)
    if arr.dtype == object:
        raise TypeError(f"{name} must be numeric")
    arr = arr.astype(complex, copy=False)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if shape is not None:
        if arr.ndim != len(shape) or any(
            want is not None and want != got for want, got in zip(shape, arr.shape)
        ):
            raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if not allow_zero and np.any(arr == 0):
        raise DegenerateSignalError(f"{name} contains zero entries")
    return arr


def check_strictly_increasing(values, name, integer=False):
    arr = np.asarray(values, dtype=int if integer else float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D sequence")
    if integer and not np.array_equal(arr, np.asarray(values)):
        raise TypeError(f"{name} must contain integers")
    if not integer and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing without duplicates")
    return arr


def uniform_spacing(values, rtol=1e-9):
    """Common step of ``values`` or None when they are not evenly spaced."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return None
    steps = np.diff(arr)
    if np.allclose(steps, steps[0], rtol=rtol, atol=0.0):
        return float(steps[0])
    return None

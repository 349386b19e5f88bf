"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


class OptiCloudError(ValueError):
    """Base class for parameter and configuration errors raised by this package."""


class InvalidParameterError(OptiCloudError):
    pass


class ShapeError(OptiCloudError):
    pass


class RangeError(OptiCloudError):
    pass


class ConfigurationError(OptiCloudError):
    pass


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise InvalidParameterError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise InvalidParameterError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise InvalidParameterError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise InvalidParameterError(f"{name} must be <= {maximum}, got {value}")
    return value


def check_vector(values, name, min_length=1):
    """Return a finite 1-D float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ShapeError(f"{name} needs at least {min_length} element(s)")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


def check_intensities(X, name="x", ensure_2d=False):
    """Validate optical drive values: finite and inside [0, 1].

    Accepts a single vector or a batch (rows are independent input vectors).
    """
    arr = np.asarray(X, dtype=float)
    if ensure_2d or arr.ndim == 2:
        arr = check_array(arr, ensure_2d=True, dtype=float, input_name=name)
    elif arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RangeError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise RangeError(
            f"{name} must lie in [0, 1] (optical intensities), "
            f"got range [{arr.min():.6g}, {arr.max():.6g}]"
        )
    return arr


def check_images(X, name="images"):
    """Return a float array of shape (n, H, W) or (n, C, H, W) with values in [0, 1]."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim not in (3, 4):
        raise ShapeError(f"{name} must have shape (n, H, W) or (n, C, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise RangeError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise RangeError(f"{name} values must lie in [0, 1]")
    return arr

"""Small input-validation helpers used across the public API.

All helpers return plain float64 numpy arrays and raise package exceptions
(never bare ValueError) so the CLI can map failures to exit codes.
"""

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError


def as_float_array(x, name="array", ndim=None):
    """Coerce to a float64 ndarray, optionally enforcing dimensionality."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionMismatchError(
            f"{name} must be {ndim}-dimensional, got shape {arr.shape}"
        )
    return arr


def as_vector(x, length=None, name="vector"):
    vec = as_float_array(x, name=name, ndim=1)
    if length is not None and vec.shape[0] != length:
        raise DimensionMismatchError(
            f"{name} must have length {length}, got {vec.shape[0]}"
        )
    return vec


def as_matrix(x, shape=None, name="matrix"):
    mat = as_float_array(x, name=name, ndim=2)
    if shape is not None:
        want = tuple(shape)
        got = mat.shape
        if any(w is not None and w != g for w, g in zip(want, got)):
            raise DimensionMismatchError(f"{name} must have shape {want}, got {got}")
    return mat


def as_image(x, name="image"):
    """Validate a 2-D grayscale raster (float64, any finite values)."""
    img = as_float_array(x, name=name, ndim=2)
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionMismatchError(f"{name} must be non-empty, got {img.shape}")
    return img


def check_positive_int(value, name):
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise InvalidParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_seed(value, name="seed"):
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 0:
        raise InvalidParameterError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def check_symmetric(mat, name="matrix", tol=1e-12):
    scale = max(1.0, float(np.abs(mat).max()) if mat.size else 1.0)
    if float(np.abs(mat - mat.T).max()) > tol * scale:
        raise InvalidParameterError(f"{name} must be symmetric")
    return mat


def sensing_entries(a):
    """Accept a SensingMatrix or a plain 2-D array and return its entries.

    The oracle tests and the sparse solver operate on arbitrary real
    matrices; production code passes SensingMatrix instances.
    """
    entries = getattr(a, "entries", a)
    return as_matrix(entries, name="sensing matrix")

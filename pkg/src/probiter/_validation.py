"""Input validation helpers shared by the public functions and estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError


def as_matrix(M, name="M"):
    """Return ``M`` as a finite 2-d float64 array."""
    try:
        return check_array(M, dtype=np.float64, ensure_2d=True, ensure_min_samples=0,
                           ensure_min_features=0, input_name=name)
    except ValueError as exc:
        raise DimensionError(f"{name}: {exc}") from exc


def as_square(M, name="M"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def as_vector(x, name="x", size=None):
    """Return ``x`` as a finite 1-d float64 array, optionally of a fixed length."""
    try:
        x = check_array(x, dtype=np.float64, ensure_2d=False, ensure_min_samples=0,
                        input_name=name)
    except ValueError as exc:
        raise DimensionError(f"{name}: {exc}") from exc
    if x.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {x.shape}")
    if size is not None and x.shape[0] != size:
        raise DimensionError(f"{name} must have length {size}, got {x.shape[0]}")
    return x


def as_samples(X, name="X", n_features=None):
    """Return ``X`` as an (N, d) finite array; a 1-d input is read as N scalars."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    X = as_matrix(X, name)
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionError(f"{name} must have {n_features} columns, got {X.shape[1]}")
    return X


def symmetrize(M):
    return 0.5 * (M + M.T)

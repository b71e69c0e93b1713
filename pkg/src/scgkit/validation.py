"""Input validation helpers for the numeric estimators."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch


def as_matrix(X) -> np.ndarray:
    """Coerce to a 2-D float64 array; 1-D input becomes a single column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D feature matrix, got ndim={X.ndim}")
    return X


def as_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D label vector, got ndim={y.ndim}")
    values = set(np.unique(y).tolist())
    if not values <= {0, 1}:
        raise ValueError(f"labels must be 0/1, got {sorted(values)}")
    return y.astype(np.int64)


def check_X_y(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = as_matrix(X)
    y = as_labels(y)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} feature rows vs {y.shape[0]} labels")
    return X, y


def check_n_features(X: np.ndarray, expected: int) -> np.ndarray:
    if X.shape[1] != expected:
        raise DimensionMismatch(f"model expects {expected} features, got {X.shape[1]}")
    return X

"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import DataError


def as_matrix(X, n_features: int | None = None) -> np.ndarray:
    """Coerce feature rows (arrays, FeatureVectors, datasets) to a finite 2-D float array."""
    if hasattr(X, "X") and hasattr(X, "y"):
        X = X.X
    elif hasattr(X, "to_array"):
        X = X.to_array()[None, :]
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise DataError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def as_Xy(X, y=None):
    """Return validated (X, y) with binary 0/1 labels; datasets supply their own labels."""
    if y is None and hasattr(X, "X") and hasattr(X, "y"):
        X, y = X.X, X.y
    X, y = check_X_y(np.asarray(X, dtype=float), y, dtype=np.float64, ensure_all_finite=True)
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0 (benign) or 1 (malicious)")
    return X, y


def require_both_classes(y: np.ndarray) -> None:
    if len(np.unique(y)) < 2:
        raise DataError("training data must contain both benign and malicious rows")


def as_sample_weight(sample_weight, n: int) -> np.ndarray:
    if sample_weight is None:
        return np.ones(n)
    w = np.asarray(sample_weight, dtype=float).reshape(-1)
    if len(w) != n:
        raise DataError("sample_weight length does not match the number of rows")
    if (w < 0).any() or not np.isfinite(w).all():
        raise DataError("sample_weight must be finite and non-negative")
    return w

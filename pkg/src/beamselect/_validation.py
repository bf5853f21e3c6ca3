"""Input validation shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DomainError


def check_features(X, n_features=None, name="X"):
    """Return ``X`` as a finite 2-D float array, optionally with a fixed width."""
    try:
        X = check_array(X, dtype=np.float64, ensure_all_finite=True, input_name=name)
    except ValueError as exc:
        raise DomainError(str(exc)) from exc
    if n_features is not None and X.shape[1] != n_features:
        raise DomainError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_labels(y, n_samples, n_classes=None):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise DomainError(f"labels must be a 1-D array of length {n_samples}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise DomainError("labels must be integer cluster indices")
        y = y.astype(np.int64)
    if y.min() < 0:
        raise DomainError("labels must be nonnegative")
    if n_classes is not None and y.max() >= n_classes:
        raise DomainError(f"label {y.max()} out of range for {n_classes} classes")
    return y


def one_hot(y, n_classes):
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y] = 1.0
    return out

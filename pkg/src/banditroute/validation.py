"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .reward import PreferenceVector


def check_embedding_matrix(X, d_e: int | None = None) -> np.ndarray:
    """Coerce to a finite float64 matrix of shape (n, d_e)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d embedding matrix, got ndim={X.ndim}")
    if d_e is not None and X.shape[1] != d_e:
        raise ValueError(f"embeddings have dim {X.shape[1]}, expected {d_e}")
    if not np.all(np.isfinite(X)):
        raise ValueError("embeddings contain non-finite entries")
    return X


def check_preference(value) -> PreferenceVector:
    """Accept a PreferenceVector or any (w_q, w_c) pair."""
    if isinstance(value, PreferenceVector):
        return value
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (2,):
        raise ValueError(f"preference must be a PreferenceVector or length-2 pair, got {value!r}")
    return PreferenceVector(float(arr[0]), float(arr[1]))

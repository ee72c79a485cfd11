"""Input-validation helpers shared by the numeric modules."""

from __future__ import annotations

import numpy as np


def as_sample_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array of samples; 1-D input becomes one row."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_label_vector(y, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got ndim={arr.ndim}")
    arr = arr.astype(np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 labels")
    return arr


def check_consistent_length(a, b, exc: type[Exception] = ValueError) -> None:
    if len(a) != len(b):
        raise exc(f"length mismatch: {len(a)} vs {len(b)}")

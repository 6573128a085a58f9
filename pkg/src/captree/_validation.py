"""Input validation helpers used by the estimators and pipeline stages."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch


def check_embedding_matrix(X, *, min_rows: int = 1) -> np.ndarray:
    """Coerce ``X`` to a 2-D float64 array of shape (n_frames, dim).

    A 1-D input is treated as a single feature column. Rejects empty
    inputs and non-finite values.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={X.ndim}")
    if X.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} rows, got {X.shape[0]}")
    if X.shape[1] < 1:
        raise ValueError("matrix has zero feature columns")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite values")
    return X


def check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positive_real(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value

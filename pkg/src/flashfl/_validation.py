"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_contexts(X, d: int | None = None) -> np.ndarray:
    """Validate a ``(m, d)`` matrix of context vectors."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if d is not None and X.shape[1] != d:
        raise ValueError(f"context dimension {X.shape[1]} does not match state dimension {d}")
    return X


def check_vector(x, name: str, size: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if size is not None and x.shape[0] != size:
        raise ValueError(f"{name} has length {x.shape[0]}, expected {size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def check_prob_matrix(P, name: str = "probabilities", atol: float = 1e-6) -> np.ndarray:
    """Validate rows of probability vectors (entries in [0, 1], rows sum to 1)."""
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {P.shape}")
    if P.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(P)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(P < -atol) or np.any(P > 1 + atol):
        raise ValueError(f"{name} has entries outside [0, 1]")
    if not np.allclose(P.sum(axis=1), 1.0, atol=atol):
        raise ValueError(f"{name} rows must sum to 1")
    return P


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)

"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_states(X, n_features: int | None = None) -> np.ndarray:
    """2-D finite float array of states, one per row."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} state components, got {X.shape[1]}")
    return X


def check_probability_vector(p, name: str, atol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} must be a non-negative vector summing to 1")
    return p


def check_action(action, n_actions: int) -> int:
    if not (isinstance(action, (int, np.integer)) and 0 <= action < n_actions):
        raise ValueError(f"action must be an integer in [0, {n_actions}), got {action!r}")
    return int(action)

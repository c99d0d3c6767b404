"""Log-ratio proximity score between vectors in the comparison space.

    score(u, v) = ln((d2 + 1) / (d2 + eps)),   d2 = ||u - v||^2

Strictly decreasing in the squared distance, symmetric in its arguments,
and bounded in (0, ln(1/eps)]; the ceiling ln(1/eps) is attained at u = v.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def _check_epsilon(eps: float) -> None:
    if not (0.0 < eps < 1.0):
        raise NumericalError(f"epsilon must lie in (0, 1), got {eps!r}")


def similarity_from_sqdist(d2, eps: float = 1e-4):
    """Score as a function of squared distance; works on scalars and arrays."""
    _check_epsilon(eps)
    return np.log((d2 + 1.0) / (d2 + eps))


def similarity(u, v, eps: float = 1e-4) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NumericalError("similarity inputs must be finite")
    d2 = float(np.sum((u - v) ** 2))
    return float(similarity_from_sqdist(d2, eps))


def similarity_gradient(u, v, eps: float = 1e-4) -> np.ndarray:
    """Analytic gradient of ``similarity`` with respect to ``u``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NumericalError("similarity inputs must be finite")
    _check_epsilon(eps)
    diff = u - v
    d2 = float(np.sum(diff * diff))
    return 2.0 * diff * (1.0 / (d2 + 1.0) - 1.0 / (d2 + eps))


def sentence_scores(rows: np.ndarray, target: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Score of every row of an (m, r) matrix against one target vector."""
    rows = np.asarray(rows, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(target))):
        raise NumericalError("similarity inputs must be finite")
    d2 = np.sum((rows - target[None, :]) ** 2, axis=1)
    return similarity_from_sqdist(d2, eps)

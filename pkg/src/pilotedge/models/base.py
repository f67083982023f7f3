"""Verdict type and numeric helpers shared by the detector models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Verdict:
    """Per-point outcome: a raw anomaly score and the thresholded call."""

    score: float
    is_outlier: bool


def as_points(block) -> np.ndarray:
    """Accept a PointBlock or a bare array; return an (n, d) float64 view."""
    values = getattr(block, "points", block)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError("points must be 1-d or 2-d")
    return arr


def pairwise_sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, shape (len(X), len(C)), clipped at zero."""
    x2 = np.einsum("ij,ij->i", X, X)
    c2 = np.einsum("ij,ij->i", C, C)
    d2 = x2[:, None] + c2[None, :] - 2.0 * (X @ C.T)
    np.maximum(d2, 0.0, out=d2)
    return d2

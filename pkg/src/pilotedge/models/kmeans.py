"""Mini-batch k-means with a distance-threshold outlier rule.

The first batch seeds the centroids (greedy k-means++ style: candidates
drawn proportional to squared distance, keeping the one that lowers the
batch potential most, so isolated outliers almost never become seeds).
Every batch, including the first, is then assimilated with the
per-centroid 1/count learning rate, applied in closed form: a centroid
that receives m points moves by sum(x - c) / (count + m), which equals
the sequential per-point rule and is an exact no-op when all assigned
points already sit on the centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import DegenerateBatch, Uninitialized
from .base import Verdict, as_points, pairwise_sq_dists


@dataclass
class KMeansState:
    """Centroids, per-centroid assimilation counts and the outlier cutoff."""

    k: int
    seed: int = 0
    centroids: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = field(default=None, repr=False)
    threshold: float = math.inf

    @property
    def initialized(self) -> bool:
        return self.centroids is not None

    @property
    def assimilated(self) -> int:
        """Total points ever folded in; counts start at one per centroid."""
        if self.counts is None:
            return 0
        return int(self.counts.sum()) - self.k


def _seed_centroids(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    distinct = np.unique(X, axis=0)
    if len(distinct) < k:
        raise DegenerateBatch(
            f"need at least {k} distinct points to seed, got {len(distinct)}"
        )
    n = len(X)
    n_trials = 2 + int(math.log(k))

    candidates = rng.integers(0, n, size=n_trials)
    d2 = pairwise_sq_dists(X, X[candidates])
    best = int(np.argmin(d2.sum(axis=0)))
    centers = [X[candidates[best]].copy()]
    closest = d2[:, best].copy()

    for _ in range(1, k):
        weights = closest / closest.sum()
        candidates = rng.choice(n, size=n_trials, p=weights)
        d2 = pairwise_sq_dists(X, X[candidates])
        trial_closest = np.minimum(closest[:, None], d2)
        best = int(np.argmin(trial_closest.sum(axis=0)))
        centers.append(X[candidates[best]].copy())
        closest = np.ascontiguousarray(trial_closest[:, best])
    return np.stack(centers)


def kmeans_update(state: KMeansState, block) -> KMeansState:
    """Assimilate one batch in place; seeds the centroids on the first call."""
    X = as_points(block)
    if not state.initialized:
        rng = np.random.default_rng(state.seed)
        state.centroids = _seed_centroids(X, state.k, rng)
        state.counts = np.ones(state.k, dtype=np.int64)

    d2 = pairwise_sq_dists(X, state.centroids)
    assign = np.argmin(d2, axis=1)
    dists = np.sqrt(d2[np.arange(len(X)), assign])

    for i in np.unique(assign):
        mask = assign == i
        m = int(mask.sum())
        delta = (X[mask] - state.centroids[i]).sum(axis=0)
        state.centroids[i] += delta / (int(state.counts[i]) + m)
        state.counts[i] += m

    state.threshold = float(dists.mean() + 3.0 * dists.std())
    return state


def kmeans_distances(state: KMeansState, block) -> np.ndarray:
    """Distance from each point to its nearest centroid."""
    if not state.initialized:
        raise Uninitialized("kmeans state has no centroids yet")
    X = as_points(block)
    d2 = pairwise_sq_dists(X, state.centroids)
    return np.sqrt(d2.min(axis=1))


def kmeans_score(state: KMeansState, block) -> List[Verdict]:
    """Score a batch against the current centroids without mutating state."""
    dists = kmeans_distances(state, block)
    threshold = state.threshold
    return [Verdict(float(d), bool(d > threshold)) for d in dists]

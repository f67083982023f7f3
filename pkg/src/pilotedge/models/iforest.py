"""Isolation forest over random subsamples.

Each tree recursively splits a uniform subsample on a random non-constant
feature at a uniform point within that feature's range, stopping at
isolation, at the height limit ceil(log2(subsample)), or when every
feature is constant. Scores follow the usual normalization: the average
path length E(h), with a c(leaf_size) credit for unsplit leaves, is
mapped to s = 2^(-E(h)/c(subsample)), so s rises toward 1 for points
isolated quickly and sits near 0.5 for average ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import TooFewPoints, Unfitted
from .base import Verdict, as_points

EULER_GAMMA = 0.5772156649
DEFAULT_TREE_COUNT = 100
DEFAULT_SUBSAMPLE = 256
DEFAULT_MARGIN = 0.1


def c_factor(n: int) -> float:
    """Expected path length of an unsuccessful BST search among n points.

    c(1) = 0; for n >= 2, c(n) = 2*(ln(n-1) + gamma) - 2*(n-1)/n.
    """
    if n <= 1:
        return 0.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


def _c_factor_vec(sizes: np.ndarray) -> np.ndarray:
    out = np.zeros(sizes.shape, dtype=np.float64)
    big = sizes > 1
    nb = sizes[big].astype(np.float64)
    out[big] = 2.0 * (np.log(nb - 1.0) + EULER_GAMMA) - 2.0 * (nb - 1.0) / nb
    return out


@dataclass
class IForestTree:
    """One tree as parallel node arrays; leaves have feature == -1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.feature)


class _FlatForest:
    """All trees concatenated into shared node arrays for batch scoring.

    Child indices are rebased into the concatenated arrays and every node
    carries its precomputed path contribution depth + c(size), so one
    (points x trees) index matrix walks every tree simultaneously.
    """

    def __init__(self, trees: List["IForestTree"]):
        roots = []
        base = 0
        feature, threshold, left, right, contribution = [], [], [], [], []
        for tree in trees:
            roots.append(base)
            feature.append(tree.feature)
            threshold.append(tree.threshold)
            left.append(np.where(tree.left >= 0, tree.left + base, -1))
            right.append(np.where(tree.right >= 0, tree.right + base, -1))
            contribution.append(tree.depth + _c_factor_vec(tree.size))
            base += tree.node_count
        self.roots = np.asarray(roots, dtype=np.int64)
        self.feature = np.concatenate(feature)
        self.threshold = np.concatenate(threshold)
        self.left = np.concatenate(left)
        self.right = np.concatenate(right)
        self.contribution = np.concatenate(contribution)


@dataclass
class IForestState:
    tree_count: int
    subsample: int
    effective_subsample: int
    height_limit: int
    margin: float = DEFAULT_MARGIN
    trees: List[IForestTree] = field(default_factory=list, repr=False)
    _flat_cache: Optional[_FlatForest] = field(default=None, init=False, repr=False)

    @property
    def fitted(self) -> bool:
        return bool(self.trees)

    def flat(self) -> _FlatForest:
        if self._flat_cache is None:
            self._flat_cache = _FlatForest(self.trees)
        return self._flat_cache


class _TreeBuilder:
    def __init__(self, height_limit: int, rng: np.random.Generator):
        self.height_limit = height_limit
        self.rng = rng
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.size: List[int] = []
        self.depth: List[int] = []

    def _add_node(self, n: int, depth: int) -> int:
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(n)
        self.depth.append(depth)
        return idx

    def build(self, X: np.ndarray, depth: int = 0) -> int:
        n = len(X)
        idx = self._add_node(n, depth)
        if n <= 1 or depth >= self.height_limit:
            return idx
        mins = X.min(axis=0)
        maxs = X.max(axis=0)
        splittable = np.flatnonzero(maxs > mins)
        if splittable.size == 0:
            return idx
        f = int(self.rng.choice(splittable))
        split = float(self.rng.uniform(mins[f], maxs[f]))
        go_left = X[:, f] < split
        if go_left.all() or not go_left.any():
            return idx
        self.feature[idx] = f
        self.threshold[idx] = split
        self.left[idx] = self.build(X[go_left], depth + 1)
        self.right[idx] = self.build(X[~go_left], depth + 1)
        return idx

    def finish(self) -> IForestTree:
        return IForestTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            size=np.asarray(self.size, dtype=np.int32),
            depth=np.asarray(self.depth, dtype=np.int32),
        )


def iforest_fit(block, tree_count: int = DEFAULT_TREE_COUNT,
                subsample: int = DEFAULT_SUBSAMPLE, seed: int = 0,
                margin: float = DEFAULT_MARGIN) -> IForestState:
    """Fit a forest on one batch; deterministic for a fixed seed."""
    X = as_points(block)
    n = len(X)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points to fit, got {n}")
    effective = min(subsample, n)
    height_limit = int(math.ceil(math.log2(effective)))
    rng = np.random.default_rng(seed)

    trees = []
    for _ in range(tree_count):
        sample = rng.choice(n, size=effective, replace=False)
        builder = _TreeBuilder(height_limit, rng)
        builder.build(X[sample])
        trees.append(builder.finish())
    return IForestState(
        tree_count=tree_count, subsample=subsample,
        effective_subsample=effective, height_limit=height_limit,
        margin=margin, trees=trees,
    )


def iforest_scores(state: IForestState, block) -> np.ndarray:
    """Anomaly score per point, in (0, 1]."""
    if not state.fitted:
        raise Unfitted("forest has no trees; fit it first")
    X = as_points(block)
    n = len(X)
    flat = state.flat()
    rows = np.arange(n)[:, None]
    idx = np.broadcast_to(flat.roots, (n, len(flat.roots))).copy()
    for _ in range(state.height_limit):
        feat = flat.feature[idx]
        interior = feat >= 0
        if not interior.any():
            break
        col = np.where(interior, feat, 0)
        go_left = X[rows, col] < flat.threshold[idx]
        step = np.where(go_left, flat.left[idx], flat.right[idx])
        idx = np.where(interior, step, idx)
    path = flat.contribution[idx].mean(axis=1)
    return np.power(2.0, -path / c_factor(state.effective_subsample))


def iforest_score(state: IForestState, block) -> List[Verdict]:
    scores = iforest_scores(state, block)
    cutoff = 0.5 + state.margin
    return [Verdict(float(s), bool(s > cutoff)) for s in scores]

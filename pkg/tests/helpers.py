"""Hand-rolled oracles shared by the unit and acceptance suites.

Everything here is intentionally written the slow, obvious way so the
production code has something independent to be compared against.
"""

import numpy as np

from pilotedge.errors import OffsetOutOfRange, OffsetOutOfRetention
from pilotedge.models import ae_forward


class ReferenceLog:
    """Unbounded append-only log with explicit eviction; the broker must agree."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.items = []  # message ids, index == offset
        self.base = 0
        self.committed = {}

    def live(self):
        return len(self.items) - self.base

    def produce(self, message_id, has_group):
        while self.live() >= self.capacity:
            floor = min(self.committed.values()) if has_group and self.committed else None
            if has_group and floor is not None and floor <= self.base:
                return None  # would block
            if has_group and not self.committed:
                return None  # registered group never committed: offset 0 is protected
            self.base += 1
        self.items.append(message_id)
        return len(self.items) - 1

    def fetch(self, from_offset, max_records):
        if from_offset > len(self.items):
            return OffsetOutOfRange
        if from_offset < self.base:
            return OffsetOutOfRetention
        return self.items[from_offset : min(from_offset + max_records, len(self.items))]

    def commit(self, group, value):
        if value > len(self.items):
            return OffsetOutOfRange
        self.committed[group] = max(self.committed.get(group, 0), value)
        return None


# ----------------------------------------------------- gradient checking

def flatten_params(state):
    return np.concatenate([a.ravel() for a in (*state.weights, *state.biases)])


def write_params(state, flat):
    pos = 0
    for arr in (*state.weights, *state.biases):
        arr.flat[:] = flat[pos : pos + arr.size]
        pos += arr.size


def central_differences(state, X, eps=1e-6):
    theta = flatten_params(state)
    grads = np.empty_like(theta)
    for j in range(len(theta)):
        bumped = theta.copy()
        bumped[j] = theta[j] + eps
        write_params(state, bumped)
        _, errors = ae_forward(state, X)
        hi = errors.mean()
        bumped[j] = theta[j] - eps
        write_params(state, bumped)
        _, errors = ae_forward(state, X)
        lo = errors.mean()
        grads[j] = (hi - lo) / (2 * eps)
    write_params(state, theta)
    return grads


def min_abs_preactivation(state, X):
    h = X
    worst = np.inf
    for i, (W, b) in enumerate(zip(state.weights, state.biases)):
        z = h @ W + b
        if i < len(state.weights) - 1:
            worst = min(worst, float(np.abs(z).min()))
            h = np.maximum(z, 0.0)
        else:
            h = z
    return worst


# ------------------------------------------------------------ rank AUC

def rank_auc(scores, labels) -> float:
    """Mann-Whitney AUC from sorted ranks, ties averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1, dtype=np.float64)
    # average the ranks inside each group of equal scores
    sorted_scores = scores[order]
    start = 0
    for stop in range(1, len(scores) + 1):
        if stop == len(scores) or sorted_scores[stop] != sorted_scores[start]:
            ranks[order[start:stop]] = np.mean(ranks[order[start:stop]])
            start = stop
    positives = labels == 1
    n_pos = int(positives.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both classes for an AUC")
    u_stat = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))

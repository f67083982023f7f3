"""The test oracles themselves deserve a sanity pass."""

import numpy as np
import pytest

from helpers import rank_auc


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_rank_auc_matches_pairwise_count():
    rng = np.random.default_rng(5)
    scores = rng.normal(size=200)
    labels = (rng.random(200) < 0.3).astype(int)
    assert rank_auc(scores, labels) == pytest.approx(
        pairwise_auc(scores, labels), abs=1e-12
    )


def test_rank_auc_averages_ties():
    scores = [1.0, 1.0, 1.0, 1.0]
    labels = [0, 1, 0, 1]
    assert rank_auc(scores, labels) == 0.5


def test_rank_auc_perfect_and_inverted():
    scores = [0.1, 0.2, 0.8, 0.9]
    assert rank_auc(scores, [0, 0, 1, 1]) == 1.0
    assert rank_auc(scores, [1, 1, 0, 0]) == 0.0


def test_rank_auc_requires_both_classes():
    with pytest.raises(ValueError):
        rank_auc([0.5, 0.6], [1, 1])

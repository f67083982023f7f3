"""
Three streaming outlier detectors on one labelled feed
======================================================

The generator emits 32-feature points around known cluster centers and
salts in a fraction of uniform outliers, keeping the labels on the side.
Each detector turns a batch into scores where higher means stranger.
"""

import numpy as np

from pilotedge.datagen import GeneratorSpec, generate_block
from pilotedge.models import (
    KMeansState,
    ae_init,
    ae_score,
    ae_train_step,
    iforest_fit,
    iforest_scores,
    kmeans_distances,
    kmeans_update,
)

spec = GeneratorSpec(seed=4, cluster_count=25, outlier_fraction=0.05)
block = generate_block(spec, 4000)
print(f"block of {len(block.points)} points, {int(block.labels.sum())} true outliers")


def separation(scores):
    # mean score of true outliers versus true inliers: a quick, honest gap
    return scores[block.labels == 1].mean() / scores[block.labels == 0].mean()


# mini-batch k-means: distance to the nearest centroid is the score
km = KMeansState(k=25, seed=4)
kmeans_update(km, block)
print(f"kmeans outlier/inlier score ratio: {separation(kmeans_distances(km, block)):.1f}x")

# isolation forest: short average isolation paths mean easy to single out
forest = iforest_fit(block, tree_count=100, subsample=256, seed=4)
print(f"iforest outlier/inlier score ratio: {separation(iforest_scores(forest, block)):.1f}x")

# autoencoder: reconstruction error after a few training passes
ae = ae_init(seed=4)
rng = np.random.default_rng(0)
for _ in range(30):
    ae_train_step(ae, block.points[rng.permutation(4000)[:256]])
verdicts = ae_score(ae, block)
scores = np.array([v.score for v in verdicts])
flagged = sum(v.is_outlier for v in verdicts)
print(f"autoencoder outlier/inlier score ratio: {separation(scores):.1f}x")
print(f"autoencoder flagged {flagged} points at its running threshold")

"""Streaming outlier detectors and their shared blob codec."""

from .base import Verdict, as_points
from .kmeans import KMeansState, kmeans_distances, kmeans_score, kmeans_update
from .iforest import IForestState, iforest_fit, iforest_score, iforest_scores
from .autoencoder import (
    AEState,
    LAYER_DIMS,
    ae_forward,
    ae_init,
    ae_score,
    ae_train_step,
    param_count,
)
from .codec import (
    TAG_AUTOENCODER,
    TAG_IFOREST,
    TAG_KMEANS,
    deserialize_state,
    serialize_state,
)

__all__ = [
    "Verdict", "as_points",
    "KMeansState", "kmeans_update", "kmeans_score", "kmeans_distances",
    "IForestState", "iforest_fit", "iforest_score", "iforest_scores",
    "AEState", "LAYER_DIMS", "ae_init", "ae_forward", "ae_train_step",
    "ae_score", "param_count",
    "TAG_KMEANS", "TAG_IFOREST", "TAG_AUTOENCODER",
    "serialize_state", "deserialize_state",
]

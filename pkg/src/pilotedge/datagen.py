"""Synthetic clustered points with a controllable outlier fraction.

Inlier points are drawn from isotropic Gaussian clusters whose centers
are sampled uniformly from [-10, 10]^d once per generator seed. Outliers
are sampled uniformly from the box scaled by 1.5, i.e. [-15, 15]^d.
Every block is reproducible from (seed, block index) alone, so any
worker can regenerate any block without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEATURE_DIM = 32
CENTER_BOX_HALF_WIDTH = 10.0
OUTLIER_BOX_SCALE = 1.5


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters that fully determine the synthetic stream."""

    seed: int
    cluster_count: int = 25
    cluster_std: float = 1.0
    outlier_fraction: float = 0.05
    feature_dim: int = FEATURE_DIM

    def __post_init__(self):
        if self.cluster_count < 1:
            raise ValueError("cluster_count must be >= 1")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must be in [0, 1]")
        if self.cluster_std <= 0:
            raise ValueError("cluster_std must be > 0")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")


@dataclass
class PointBlock:
    """One batch of points plus ground-truth outlier labels.

    Labels never cross the wire; payloads carry only the raw float64
    matrix so the pipeline sees what a real sensor feed would send.
    """

    points: np.ndarray
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.points.ndim != 2:
            raise ValueError("points must be 2-d")
        if len(self.labels) != len(self.points):
            raise ValueError("labels length must match points")

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def to_payload(self) -> bytes:
        """Row-major little-endian float64 bytes, n*d*8 long."""
        return self.points.astype("<f8", copy=False).tobytes(order="C")

    @staticmethod
    def from_payload(payload: bytes, feature_dim: int = FEATURE_DIM) -> np.ndarray:
        """Decode a payload back into an (n, feature_dim) float64 array."""
        if len(payload) % (8 * feature_dim) != 0:
            raise ValueError(
                f"payload of {len(payload)} bytes is not a whole number of "
                f"{feature_dim}-feature float64 rows"
            )
        flat = np.frombuffer(payload, dtype="<f8")
        return flat.reshape(-1, feature_dim)


def payload_nbytes(n_points: int, feature_dim: int = FEATURE_DIM) -> int:
    """Exact serialized size of a block: n * d * 8 bytes."""
    return n_points * feature_dim * 8


def cluster_centers(spec: GeneratorSpec) -> np.ndarray:
    """Cluster centers for a spec, fixed by its seed alone."""
    rng = np.random.default_rng(spec.seed)
    return rng.uniform(
        -CENTER_BOX_HALF_WIDTH, CENTER_BOX_HALF_WIDTH,
        size=(spec.cluster_count, spec.feature_dim),
    )


def generate_block(spec: GeneratorSpec, n_points: int,
                   index: Sequence[int] = (0,)) -> PointBlock:
    """Generate one labelled block, deterministic in (spec.seed, index).

    The block index can be any tuple of non-negative integers, e.g.
    (partition, sequence_number); distinct indices give independent
    streams from the same underlying cluster layout.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    centers = cluster_centers(spec)
    rng = np.random.default_rng([spec.seed, *index])
    n_out = int(round(spec.outlier_fraction * n_points))
    n_in = n_points - n_out

    assignments = rng.integers(0, spec.cluster_count, size=n_in)
    inliers = centers[assignments] + rng.normal(
        0.0, spec.cluster_std, size=(n_in, spec.feature_dim)
    )
    half = CENTER_BOX_HALF_WIDTH * OUTLIER_BOX_SCALE
    outliers = rng.uniform(-half, half, size=(n_out, spec.feature_dim))

    points = np.concatenate([inliers, outliers], axis=0)
    labels = np.concatenate([
        np.zeros(n_in, dtype=np.int8), np.ones(n_out, dtype=np.int8),
    ])
    order = rng.permutation(n_points)
    return PointBlock(points=points[order], labels=labels[order])

"""Model-state blobs: tags, bit-identical round-trips, malformed input."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotedge.errors import TruncatedBlob, UnknownModelTag
from pilotedge.models import (
    TAG_AUTOENCODER,
    TAG_IFOREST,
    TAG_KMEANS,
    KMeansState,
    ae_init,
    ae_train_step,
    deserialize_state,
    iforest_fit,
    kmeans_update,
    serialize_state,
)


def test_tags_are_pinned():
    assert (TAG_KMEANS, TAG_IFOREST, TAG_AUTOENCODER) == (1, 2, 3)


def test_kmeans_round_trip_bit_identical():
    X = np.random.default_rng(0).normal(size=(60, 5))
    state = kmeans_update(KMeansState(k=4, seed=9), X)
    blob = serialize_state(state)
    assert blob[0] == TAG_KMEANS
    back = deserialize_state(blob)
    assert (back.k, back.seed, back.threshold) == (state.k, state.seed, state.threshold)
    np.testing.assert_array_equal(back.centroids, state.centroids)
    np.testing.assert_array_equal(back.counts, state.counts)
    assert serialize_state(back) == blob


def test_kmeans_uninitialized_round_trip():
    state = KMeansState(k=7, seed=2)
    back = deserialize_state(serialize_state(state))
    assert back.k == 7 and back.centroids is None and back.counts is None


def test_iforest_round_trip_bit_identical():
    X = np.random.default_rng(1).normal(size=(120, 4))
    state = iforest_fit(X, tree_count=8, subsample=64, seed=3)
    blob = serialize_state(state)
    assert blob[0] == TAG_IFOREST
    back = deserialize_state(blob)
    assert (back.tree_count, back.subsample, back.effective_subsample,
            back.height_limit, back.margin) == (
        state.tree_count, state.subsample, state.effective_subsample,
        state.height_limit, state.margin)
    assert len(back.trees) == len(state.trees)
    for ta, tb in zip(state.trees, back.trees):
        for name in ("feature", "threshold", "left", "right", "size", "depth"):
            np.testing.assert_array_equal(getattr(ta, name), getattr(tb, name))
    assert serialize_state(back) == blob


def test_autoencoder_round_trip_bit_identical():
    state = ae_init(seed=4, layer_dims=(6, 3, 6))
    ae_train_step(state, np.random.default_rng(5).normal(size=(20, 6)))
    blob = serialize_state(state)
    assert blob[0] == TAG_AUTOENCODER
    back = deserialize_state(blob)
    assert back.layer_dims == state.layer_dims
    assert back.learning_rate == state.learning_rate
    assert back.threshold == state.threshold
    for a, b in zip(state.weights, back.weights):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(state.biases, back.biases):
        np.testing.assert_array_equal(a, b)
    assert serialize_state(back) == blob


def test_unknown_tag_rejected():
    with pytest.raises(UnknownModelTag):
        deserialize_state(bytes([42]) + b"\x00" * 16)


def test_empty_blob_rejected():
    with pytest.raises(TruncatedBlob):
        deserialize_state(b"")


def test_every_truncation_is_detected():
    state = kmeans_update(KMeansState(k=2, seed=0),
                          np.random.default_rng(2).normal(size=(10, 3)))
    blob = serialize_state(state)
    for cut in range(1, len(blob)):
        with pytest.raises(TruncatedBlob):
            deserialize_state(blob[:cut])


def test_trailing_garbage_rejected():
    blob = serialize_state(KMeansState(k=2, seed=0))
    with pytest.raises(TruncatedBlob):
        deserialize_state(blob + b"\x00")


def test_little_endian_kmeans_header():
    state = KMeansState(k=3, seed=258, threshold=1.5)
    blob = serialize_state(state)
    assert blob[:21] == struct.pack("<BIQd", 1, 3, 258, 1.5)
    assert blob[21:] == struct.pack("<I", 0)  # no centroids yet


@settings(max_examples=40, deadline=None)
@given(
    k=st.integers(1, 6),
    d=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
    initialized=st.booleans(),
)
def test_kmeans_round_trip_property(k, d, seed, initialized):
    state = KMeansState(k=k, seed=seed)
    if initialized:
        rng = np.random.default_rng(seed)
        state.centroids = rng.normal(size=(k, d))
        state.counts = rng.integers(1, 100, size=k).astype(np.int64)
        state.threshold = float(rng.uniform(0, 10))
    blob = serialize_state(state)
    back = deserialize_state(blob)
    assert serialize_state(back) == blob

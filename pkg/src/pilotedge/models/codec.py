"""Binary blob format for shipping model state through the parameter store.

Every blob starts with a one-byte model tag (1 kmeans, 2 isolation
forest, 3 autoencoder); all integers and doubles are little-endian.
Round-tripping any reachable state is bit-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import TruncatedBlob, UnknownModelTag
from .autoencoder import AEState
from .iforest import IForestState, IForestTree
from .kmeans import KMeansState

TAG_KMEANS = 1
TAG_IFOREST = 2
TAG_AUTOENCODER = 3


class _Cursor:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedBlob(
                f"need {n} bytes at offset {self.pos}, blob has {len(self.blob)}"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(itemsize * count), dtype=dtype).copy()

    def done(self) -> None:
        if self.pos != len(self.blob):
            raise TruncatedBlob(
                f"{len(self.blob) - self.pos} trailing bytes after model state"
            )


def _pack_array(arr: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(arr).astype(dtype, copy=False).tobytes()


def _encode_kmeans(state: KMeansState) -> bytes:
    parts = [struct.pack("<BIQd", TAG_KMEANS, state.k, state.seed, state.threshold)]
    if state.centroids is None:
        parts.append(struct.pack("<I", 0))
    else:
        d = state.centroids.shape[1]
        parts.append(struct.pack("<I", d))
        parts.append(_pack_array(state.centroids, "<f8"))
        parts.append(_pack_array(state.counts, "<u8"))
    return b"".join(parts)


def _decode_kmeans(cur: _Cursor) -> KMeansState:
    k, seed, threshold = cur.unpack("<IQd")
    (d,) = cur.unpack("<I")
    state = KMeansState(k=k, seed=seed, threshold=threshold)
    if d > 0:
        state.centroids = cur.array("<f8", k * d).reshape(k, d)
        state.counts = cur.array("<u8", k).astype(np.int64)
    return state


def _encode_iforest(state: IForestState) -> bytes:
    parts = [struct.pack(
        "<BIIIId", TAG_IFOREST, state.tree_count, state.subsample,
        state.effective_subsample, state.height_limit, state.margin,
    )]
    parts.append(struct.pack("<I", len(state.trees)))
    for tree in state.trees:
        parts.append(struct.pack("<I", tree.node_count))
        parts.append(_pack_array(tree.feature, "<i4"))
        parts.append(_pack_array(tree.threshold, "<f8"))
        parts.append(_pack_array(tree.left, "<i4"))
        parts.append(_pack_array(tree.right, "<i4"))
        parts.append(_pack_array(tree.size, "<i4"))
        parts.append(_pack_array(tree.depth, "<i4"))
    return b"".join(parts)


def _decode_iforest(cur: _Cursor) -> IForestState:
    tree_count, subsample, effective, height_limit, margin = cur.unpack("<IIIId")
    (n_trees,) = cur.unpack("<I")
    trees = []
    for _ in range(n_trees):
        (n_nodes,) = cur.unpack("<I")
        trees.append(IForestTree(
            feature=cur.array("<i4", n_nodes),
            threshold=cur.array("<f8", n_nodes),
            left=cur.array("<i4", n_nodes),
            right=cur.array("<i4", n_nodes),
            size=cur.array("<i4", n_nodes),
            depth=cur.array("<i4", n_nodes),
        ))
    return IForestState(
        tree_count=tree_count, subsample=subsample,
        effective_subsample=effective, height_limit=height_limit,
        margin=margin, trees=trees,
    )


def _encode_autoencoder(state: AEState) -> bytes:
    parts = [struct.pack("<BB", TAG_AUTOENCODER, len(state.layer_dims))]
    parts.append(struct.pack(f"<{len(state.layer_dims)}I", *state.layer_dims))
    parts.append(struct.pack("<dd", state.learning_rate, state.threshold))
    for W, b in zip(state.weights, state.biases):
        parts.append(_pack_array(W, "<f8"))
        parts.append(_pack_array(b, "<f8"))
    return b"".join(parts)


def _decode_autoencoder(cur: _Cursor) -> AEState:
    (n_layers,) = cur.unpack("<B")
    layer_dims = cur.unpack(f"<{n_layers}I")
    learning_rate, threshold = cur.unpack("<dd")
    weights = []
    biases = []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(cur.array("<f8", d_in * d_out).reshape(d_in, d_out))
        biases.append(cur.array("<f8", d_out))
    return AEState(
        weights=weights, biases=biases, layer_dims=tuple(layer_dims),
        learning_rate=learning_rate, threshold=threshold,
    )


def serialize_state(state) -> bytes:
    """Encode any model state into a tagged self-describing blob."""
    if isinstance(state, KMeansState):
        return _encode_kmeans(state)
    if isinstance(state, IForestState):
        return _encode_iforest(state)
    if isinstance(state, AEState):
        return _encode_autoencoder(state)
    raise UnknownModelTag(f"cannot serialize {type(state).__name__}")


def deserialize_state(blob: bytes):
    """Decode a tagged blob back into the matching state object."""
    cur = _Cursor(blob)
    (tag,) = cur.unpack("<B")
    if tag == TAG_KMEANS:
        state = _decode_kmeans(cur)
    elif tag == TAG_IFOREST:
        state = _decode_iforest(cur)
    elif tag == TAG_AUTOENCODER:
        state = _decode_autoencoder(cur)
    else:
        raise UnknownModelTag(f"unknown model tag {tag}")
    cur.done()
    return state

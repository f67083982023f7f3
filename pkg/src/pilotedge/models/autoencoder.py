"""Dense autoencoder trained by plain mini-batch gradient descent.

Layer widths are fixed at [32, 32, 64, 32, 32, 64, 32, 32]: seven dense
layers with ReLU on the hidden ones and a linear output, 11,552
trainable parameters in total. The anomaly score of a point is its mean
squared reconstruction error; the batch loss is the mean of those, so
duplicating a batch leaves the gradient unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NonFiniteWeights
from .base import Verdict, as_points

LAYER_DIMS = (32, 32, 64, 32, 32, 64, 32, 32)
DEFAULT_LEARNING_RATE = 1e-3


def param_count(layer_dims: Sequence[int] = LAYER_DIMS) -> int:
    """Trainable scalars: sum of d_in*d_out + d_out over adjacent layers."""
    return sum(
        d_in * d_out + d_out
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:])
    )


@dataclass
class AEState:
    weights: List[np.ndarray] = field(repr=False)
    biases: List[np.ndarray] = field(repr=False)
    layer_dims: Tuple[int, ...] = LAYER_DIMS
    learning_rate: float = DEFAULT_LEARNING_RATE
    threshold: float = math.inf

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def ae_init(seed: int = 0, layer_dims: Sequence[int] = LAYER_DIMS,
            learning_rate: float = DEFAULT_LEARNING_RATE) -> AEState:
    """Glorot-scaled random weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        scale = math.sqrt(2.0 / (d_in + d_out))
        weights.append(rng.normal(0.0, scale, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return AEState(
        weights=weights, biases=biases, layer_dims=tuple(layer_dims),
        learning_rate=learning_rate,
    )


def _check_finite(state: AEState) -> None:
    for arr in (*state.weights, *state.biases):
        if not np.isfinite(arr).all():
            raise NonFiniteWeights("non-finite values in network parameters")


def _forward_pass(state: AEState, X: np.ndarray):
    """Returns (reconstruction, per-layer inputs) for backprop reuse."""
    layer_inputs = [X]
    h = X
    last = len(state.weights) - 1
    for i, (W, b) in enumerate(zip(state.weights, state.biases)):
        z = h @ W + b
        h = np.maximum(z, 0.0) if i < last else z
        layer_inputs.append(h)
    return h, layer_inputs


def ae_forward(state: AEState, block) -> Tuple[np.ndarray, np.ndarray]:
    """Reconstruct a batch; returns (reconstructions, per-point error)."""
    _check_finite(state)
    X = as_points(block)
    recon, _ = _forward_pass(state, X)
    errors = np.mean((recon - X) ** 2, axis=1)
    return recon, errors


def ae_gradients(state: AEState, block) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Gradients of the mean reconstruction loss w.r.t. every parameter.

    Returns (weight_grads, bias_grads, per_point_errors). The loss is
    mean over points of mean over features of the squared residual.
    """
    _check_finite(state)
    X = as_points(block)
    recon, layer_inputs = _forward_pass(state, X)
    n, d = X.shape
    errors = np.mean((recon - X) ** 2, axis=1)

    weight_grads: List[Optional[np.ndarray]] = [None] * len(state.weights)
    bias_grads: List[Optional[np.ndarray]] = [None] * len(state.biases)
    delta = 2.0 * (recon - X) / (n * d)
    last = len(state.weights) - 1
    for i in range(last, -1, -1):
        inputs = layer_inputs[i]
        weight_grads[i] = inputs.T @ delta
        bias_grads[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ state.weights[i].T
            # ReLU gate: layer_inputs[i] is the post-activation of layer i-1
            delta = delta * (layer_inputs[i] > 0.0)
    return weight_grads, bias_grads, errors


def ae_train_step(state: AEState, block,
                  learning_rate: Optional[float] = None) -> AEState:
    """One gradient-descent step in place; refreshes the outlier cutoff."""
    lr = state.learning_rate if learning_rate is None else learning_rate
    if lr < 0:
        raise ValueError("learning_rate must be >= 0")
    weight_grads, bias_grads, errors = ae_gradients(state, block)
    for W, dW in zip(state.weights, weight_grads):
        W -= lr * dW
    for b, db in zip(state.biases, bias_grads):
        b -= lr * db
    _check_finite(state)
    state.threshold = float(errors.mean() + 3.0 * errors.std())
    return state


def ae_score(state: AEState, block) -> List[Verdict]:
    """Score a batch by reconstruction error against the stored cutoff."""
    _, errors = ae_forward(state, block)
    threshold = state.threshold
    return [Verdict(float(e), bool(e > threshold)) for e in errors]

"""Trainable projection MLP: affine -> GELU -> dropout per hidden layer.

Maps image-text embeddings (dim F_prime) into the image-embedding space
(dim F). Forward and backward passes are written out by hand and
checked against finite differences in the test suite; no autodiff
framework is involved. GELU uses the exact erf form, not the tanh
approximation, so gradient checks carry no approximation slack.

Dropout is the inverted kind (mask / (1 - rate)), applied after each
hidden activation and never to the input or the final affine output.
Given the same seed, a train-mode forward is fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import (
    CacheMismatchError,
    ConfigError,
    DimMismatchError,
    InvalidDimsError,
)


@dataclass
class MlpParams:
    """Weights and biases of the projection head.

    ``weights[l]`` has shape (layer_dims[l], layer_dims[l+1]); biases
    match the output side. ``dropout_rate`` rides along because it is
    part of the trained configuration.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            dropout_rate=self.dropout_rate,
        )


@dataclass
class LayerTensors:
    """Per-layer arrays shaped like MlpParams; used for grads and momentum."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "LayerTensors":
        return LayerTensors([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def zeros_like_params(params: MlpParams) -> LayerTensors:
    return LayerTensors(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )


@dataclass
class ForwardCache:
    """Everything backward() needs from the matching forward() call."""

    layer_inputs: list[np.ndarray]  # input to each affine, length n_layers
    pre_activations: list[np.ndarray]  # affine outputs of hidden layers
    dropout_masks: list[np.ndarray | None]  # one per hidden layer
    dropout_scale: float
    mode: str = field(default="eval")


def init_params(layer_dims: list[int], dropout_rate: float = 0.0, seed: int = 0) -> MlpParams:
    """Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases."""
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise InvalidDimsError(f"layer_dims needs >= 2 positive entries, got {layer_dims}")
    if not (0.0 <= dropout_rate < 1.0):
        raise ConfigError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(layer_dims=list(layer_dims), weights=weights, biases=biases, dropout_rate=dropout_rate)


def gelu(x):
    """Exact GELU x * Phi(x); accepts a scalar or an ndarray."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        v = float(arr)
        return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))
    flat2d = arr if arr.ndim == 2 else arr.reshape(1, -1)
    out = backend.kernels().gelu_forward(np.ascontiguousarray(flat2d))
    return out.reshape(arr.shape)


def forward(
    x: np.ndarray,
    params: MlpParams,
    mode: str = "eval",
    seed: int = 0,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the MLP; returns (output, cache for backward).

    mode "train" samples dropout masks from ``seed``; mode "eval"
    applies none. With dropout_rate == 0 the two modes are identical.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.layer_dims[0]:
        raise DimMismatchError(f"input shape {x.shape} does not match input dim {params.layer_dims[0]}")

    kern = backend.kernels()
    rate = params.dropout_rate
    use_dropout = mode == "train" and rate > 0.0
    scale = 1.0 / (1.0 - rate) if use_dropout else 1.0
    rng = np.random.default_rng(seed) if use_dropout else None

    layer_inputs: list[np.ndarray] = []
    pre_activations: list[np.ndarray] = []
    masks: list[np.ndarray | None] = []

    current = x
    last = params.n_layers - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        layer_inputs.append(current)
        z = current @ w + b
        if layer == last:
            current = z
            break
        pre_activations.append(z)
        h = kern.gelu_forward(z)
        if use_dropout:
            mask = (rng.random(h.shape) >= rate).astype(np.float64)
            h = h * mask * scale
        else:
            mask = None
        masks.append(mask)
        current = h

    cache = ForwardCache(
        layer_inputs=layer_inputs,
        pre_activations=pre_activations,
        dropout_masks=masks,
        dropout_scale=scale,
        mode=mode,
    )
    return current, cache


def backward(
    cache: ForwardCache,
    params: MlpParams,
    grad_out: np.ndarray,
) -> tuple[LayerTensors, np.ndarray]:
    """Exact gradients w.r.t. every weight, bias, and the input batch.

    Reuses the dropout masks recorded by the matching forward call, so
    train-mode gradients correspond to the realized stochastic network.
    """
    n_layers = params.n_layers
    if len(cache.layer_inputs) != n_layers or len(cache.dropout_masks) != n_layers - 1:
        raise CacheMismatchError(
            f"cache covers {len(cache.layer_inputs)} layers, params have {n_layers}"
        )
    for layer, (inp, w) in enumerate(zip(cache.layer_inputs, params.weights)):
        if inp.shape[1] != w.shape[0]:
            raise CacheMismatchError(f"cache layer {layer} input dim {inp.shape[1]} != weight rows {w.shape[0]}")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (cache.layer_inputs[0].shape[0], params.layer_dims[-1]):
        raise CacheMismatchError(
            f"grad_out shape {grad_out.shape} does not match batch x output "
            f"({cache.layer_inputs[0].shape[0]}, {params.layer_dims[-1]})"
        )

    kern = backend.kernels()
    weight_grads: list[np.ndarray | None] = [None] * n_layers
    bias_grads: list[np.ndarray | None] = [None] * n_layers

    delta = grad_out
    for layer in range(n_layers - 1, -1, -1):
        inp = cache.layer_inputs[layer]
        weight_grads[layer] = inp.T @ delta
        bias_grads[layer] = delta.sum(axis=0)
        delta = delta @ params.weights[layer].T
        if layer > 0:
            mask = cache.dropout_masks[layer - 1]
            if mask is not None:
                delta = delta * mask * cache.dropout_scale
            delta = kern.gelu_backward(cache.pre_activations[layer - 1], delta)

    grads = LayerTensors(weights=weight_grads, biases=bias_grads)  # type: ignore[arg-type]
    return grads, delta

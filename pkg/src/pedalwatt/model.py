"""Full-precision dense regression network."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, ShapeError
from .features import INPUT_DIM, NormalizationBounds

DEFAULT_DIMS = (INPUT_DIM, 256, 128, 32, 1)
# Input width implied by the published parameter count; only used for sizing checks.
REFERENCE_DIMS = (129, 256, 128, 32, 1)


def _check_dims(layer_dims) -> Tuple[int, ...]:
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise ConfigurationError("need at least an input and an output dimension")
    if any(d <= 0 for d in dims):
        raise ConfigurationError(f"layer dimensions must be positive, got {dims}")
    return dims


def param_count(layer_dims: Sequence[int]) -> int:
    """Weights plus biases of a fully connected stack."""
    dims = _check_dims(layer_dims)
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


def neuron_count(layer_dims: Sequence[int]) -> int:
    """Units in every layer, input layer included."""
    return sum(_check_dims(layer_dims))


def _f32_bounds(bounds: NormalizationBounds) -> NormalizationBounds:
    # Bounds travel as float32 in the model file; keep the in-memory copy identical.
    return NormalizationBounds.from_pairs(bounds.as_pairs().astype(np.float32))


@dataclass(frozen=True, eq=False)
class DenseModel:
    """ReLU multilayer perceptron with an identity output in watts.

    ``weights[i]`` has shape ``(layer_dims[i + 1], layer_dims[i])``.
    """

    layer_dims: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    bounds: NormalizationBounds = field(default_factory=NormalizationBounds)

    def __post_init__(self):
        dims = _check_dims(self.layer_dims)
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("one weight matrix and one bias vector per layer required")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.array(w, dtype=np.float32)
            b = np.array(b, dtype=np.float32).reshape(-1)
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ShapeError(f"layer {i}: weight {w.shape}, bias {b.shape} do not match dims {dims}")
            w.setflags(write=False)
            b.setflags(write=False)
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))
        object.__setattr__(self, "bounds", _f32_bounds(self.bounds))

    @classmethod
    def zeros(cls, layer_dims=DEFAULT_DIMS, **kwargs) -> "DenseModel":
        dims = _check_dims(layer_dims)
        ws = [np.zeros((b, a), np.float32) for a, b in zip(dims[:-1], dims[1:])]
        bs = [np.zeros(b, np.float32) for b in dims[1:]]
        return cls(dims, tuple(ws), tuple(bs), **kwargs)

    @classmethod
    def he_uniform(cls, layer_dims=DEFAULT_DIMS, rng=None, **kwargs) -> "DenseModel":
        """Weights drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
        rng = np.random.default_rng(rng)
        dims = _check_dims(layer_dims)
        ws = []
        for a, b in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / a)
            ws.append(rng.uniform(-limit, limit, size=(b, a)).astype(np.float32))
        bs = [np.zeros(b, np.float32) for b in dims[1:]]
        return cls(dims, tuple(ws), tuple(bs), **kwargs)

    @property
    def n_params(self) -> int:
        return param_count(self.layer_dims)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def __eq__(self, other):
        if not isinstance(other, DenseModel):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.bounds == other.bounds
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


def predict(model: DenseModel, inputs) -> np.ndarray:
    """Batch forward pass in float32; returns one power value per row."""
    x = np.asarray(inputs, dtype=np.float32)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"expected inputs of width {model.input_dim}, got shape {x.shape}")
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        x = x @ w.T + b
        if i < last:
            np.maximum(x, 0.0, out=x)
    return x[:, 0]


def forward_f32(model: DenseModel, x) -> float:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ShapeError("forward_f32 takes a single input vector")
    return float(predict(model, x)[0])

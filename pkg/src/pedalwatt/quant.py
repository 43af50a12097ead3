"""Post-training int8 quantisation and the integer inference kernel.

Scheme: per-tensor symmetric int8 weights (zero-point 0, range +-127),
per-tensor asymmetric uint8 activations calibrated from float min/max, and
int32 biases at scale ``weight_scale * input_scale``. Between layers the
int32 accumulator is rescaled by a fixed-point multiplier and rounded half
away from zero, so the kernel involves no floating point at all and gives
identical results everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import CalibrationError, ShapeError
from .features import NormalizationBounds
from .model import DenseModel, _f32_bounds

INT8_MAX = 127
UINT8_MAX = 255
INT32_MIN, INT32_MAX = -(2**31), 2**31 - 1


def round_half_away(x):
    """Round to nearest, ties away from zero (``np.rint`` rounds ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_weights(w) -> Tuple[np.ndarray, np.float32]:
    """Symmetric per-tensor int8; an all-zero tensor gets scale 1."""
    w = np.asarray(w, dtype=np.float32)
    peak = float(np.max(np.abs(w))) if w.size else 0.0
    scale = np.float32(peak / INT8_MAX) if peak > 0 else np.float32(1.0)
    if scale == 0:  # peak below float32 denormal range
        scale = np.float32(1.0)
    while peak / float(scale) > INT8_MAX + 0.5:  # coarse subnormal rounding
        scale = np.nextafter(scale, np.float32(np.inf))
    q = np.clip(round_half_away(w.astype(np.float64) / np.float64(scale)), -INT8_MAX, INT8_MAX)
    return q.astype(np.int8), scale


def activation_params(lo: float, hi: float) -> Tuple[np.float32, int]:
    """Asymmetric uint8 scale and zero-point for a range widened to include 0."""
    lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
    if not hi > lo:
        return np.float32(1.0), 0
    scale = np.float32((hi - lo) / UINT8_MAX)
    zp = int(np.clip(round_half_away(-lo / np.float64(scale)), 0, UINT8_MAX))
    return scale, zp


def quantize_multiplier(m: float) -> Tuple[int, int]:
    """Express ``m > 0`` as ``m0 * 2**-shift`` with ``2**30 <= m0 <= 2**31``."""
    if m <= 0:
        return 0, 0
    frac, exp = math.frexp(m)
    m0 = int(round_half_away(frac * (1 << 31)))
    return m0, 31 - exp


def _rshift_round(v: np.ndarray, shift: int) -> np.ndarray:
    if shift <= 0:
        lim = np.int64(1) << np.int64(62 + shift)
        return np.clip(v, -lim, lim) << np.int64(-shift)
    if shift >= 63:
        # |v| < 2**62, so the rounded quotient is zero.
        return np.zeros_like(v)
    half = np.int64(1) << np.int64(shift - 1)
    mag = (np.abs(v) + half) >> np.int64(shift)
    return np.where(v < 0, -mag, mag)


@dataclass(frozen=True, eq=False)
class QuantLayer:
    weight_q: np.ndarray
    weight_scale: np.float32
    input_scale: np.float32
    input_zp: int
    bias_q: np.ndarray

    def __post_init__(self):
        w = np.array(self.weight_q, dtype=np.int8)
        b = np.array(self.bias_q, dtype=np.int32).reshape(-1)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ShapeError(f"weight {w.shape} / bias {b.shape} mismatch")
        if np.any(w == -128):
            raise ShapeError("int8 weights must lie in [-127, 127]")
        if not 0 <= int(self.input_zp) <= UINT8_MAX:
            raise ShapeError("zero-point outside [0, 255]")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight_q", w)
        object.__setattr__(self, "bias_q", b)
        object.__setattr__(self, "weight_scale", np.float32(self.weight_scale))
        object.__setattr__(self, "input_scale", np.float32(self.input_scale))
        object.__setattr__(self, "input_zp", int(self.input_zp))
        # Integer products summed in float64 are exact while every partial
        # sum stays below 2**53; that lets the matmul use BLAS.
        exact = w.shape[1] * UINT8_MAX * INT8_MAX < 2**52
        object.__setattr__(self, "_wt64", w.T.astype(np.float64) if exact else None)

    def __eq__(self, other):
        if not isinstance(other, QuantLayer):
            return NotImplemented
        return (
            np.array_equal(self.weight_q, other.weight_q)
            and np.array_equal(self.bias_q, other.bias_q)
            and self.weight_scale == other.weight_scale
            and self.input_scale == other.input_scale
            and self.input_zp == other.input_zp
        )


@dataclass(frozen=True, eq=False)
class QuantizedModel:
    layer_dims: Tuple[int, ...]
    layers: Tuple[QuantLayer, ...]
    output_scale: np.float32
    output_zp: int
    bounds: NormalizationBounds = field(default_factory=NormalizationBounds)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layers) != len(dims) - 1:
            raise ShapeError("layer count does not match dims")
        for i, layer in enumerate(self.layers):
            if layer.weight_q.shape != (dims[i + 1], dims[i]):
                raise ShapeError(f"layer {i} weight shape {layer.weight_q.shape} vs dims {dims}")
        if not 0 <= int(self.output_zp) <= UINT8_MAX:
            raise ShapeError("output zero-point outside [0, 255]")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "output_scale", np.float32(self.output_scale))
        object.__setattr__(self, "output_zp", int(self.output_zp))
        object.__setattr__(self, "bounds", _f32_bounds(self.bounds))
        # Fixed-point requantisation constants, derived once from the stored scales.
        reqs = []
        for i, layer in enumerate(self.layers):
            if i + 1 < len(self.layers):
                out_scale, out_zp = self.layers[i + 1].input_scale, self.layers[i + 1].input_zp
            else:
                out_scale, out_zp = self.output_scale, self.output_zp
            m = float(layer.input_scale) * float(layer.weight_scale) / float(out_scale)
            reqs.append(quantize_multiplier(m) + (out_zp,))
        object.__setattr__(self, "requant", tuple(reqs))

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def __eq__(self, other):
        if not isinstance(other, QuantizedModel):
            return NotImplemented
        return (
            self.layer_dims == other.layer_dims
            and self.layers == other.layers
            and self.output_scale == other.output_scale
            and self.output_zp == other.output_zp
            and self.bounds == other.bounds
        )


def _float_activations(model: DenseModel, x: np.ndarray):
    """Inputs to every layer plus the final output, float32."""
    acts = [x]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        x = x @ w.T + b
        if i < last:
            x = np.maximum(x, 0.0)
        acts.append(x)
    return acts


def quantize_model(model: DenseModel, calibration, bias_correction: bool = True) -> QuantizedModel:
    """Quantise ``model`` using activation ranges seen on ``calibration`` inputs.

    Args:
        model: trained float model.
        calibration: representative inputs, one row per stroke. They should
            span the whole output range or large outputs get clipped.
        bias_correction: shift the output-layer integer bias so the mean
            int8 output on the calibration set matches the float mean.
            Rounding errors in the hidden layers otherwise leave a steady
            offset of a watt or two.

    Raises:
        CalibrationError: if ``calibration`` is empty.
    """
    calib = np.asarray(calibration, dtype=np.float32)
    if calib.ndim == 1 and calib.size:
        calib = calib[np.newaxis, :]
    if calib.size == 0:
        raise CalibrationError("calibration set is empty")
    if calib.ndim != 2 or calib.shape[1] != model.input_dim:
        raise ShapeError(f"calibration inputs must have width {model.input_dim}")
    acts = _float_activations(model, calib)
    layers = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        in_scale, in_zp = activation_params(acts[i].min(), acts[i].max())
        wq, w_scale = quantize_weights(w)
        bias_scale = np.float64(w_scale) * np.float64(in_scale)
        bq = np.clip(round_half_away(b.astype(np.float64) / bias_scale), INT32_MIN, INT32_MAX)
        layers.append(QuantLayer(wq, w_scale, in_scale, in_zp, bq.astype(np.int32)))
    out_scale, out_zp = activation_params(acts[-1].min(), acts[-1].max())
    qmodel = QuantizedModel(model.layer_dims, tuple(layers), out_scale, out_zp, model.bounds)
    if not bias_correction:
        return qmodel
    drift = np.mean(predict_i8(qmodel, calib) - acts[-1][:, 0].astype(np.float64))
    last = layers[-1]
    step = np.float64(last.weight_scale) * np.float64(last.input_scale)
    bq = np.clip(last.bias_q.astype(np.int64) - round_half_away(drift / step).astype(np.int64), INT32_MIN, INT32_MAX)
    layers[-1] = QuantLayer(last.weight_q, last.weight_scale, last.input_scale, last.input_zp, bq.astype(np.int32))
    return QuantizedModel(model.layer_dims, tuple(layers), out_scale, out_zp, model.bounds)


def quantize_input(qmodel: QuantizedModel, inputs) -> np.ndarray:
    layer = qmodel.layers[0]
    x = np.asarray(inputs, dtype=np.float64)
    q = round_half_away(x / np.float64(layer.input_scale)) + layer.input_zp
    return np.clip(q, 0, UINT8_MAX).astype(np.int64)


def run_integer(qmodel: QuantizedModel, xq: np.ndarray) -> np.ndarray:
    """Integer-only network body: uint8 codes in, uint8 output codes out.

    ``xq`` has shape ``(batch, input_dim)``.
    """
    return layer_codes(qmodel, xq)[-1]


def layer_codes(qmodel: QuantizedModel, xq: np.ndarray) -> list:
    """Output codes of every layer, hidden ones included."""
    x = np.asarray(xq, dtype=np.int64)
    codes = []
    last = len(qmodel.layers) - 1
    for i, (layer, (m0, shift, out_zp)) in enumerate(zip(qmodel.layers, qmodel.requant)):
        if layer._wt64 is not None:
            acc = ((x - layer.input_zp).astype(np.float64) @ layer._wt64).astype(np.int64)
        else:
            acc = (x - layer.input_zp) @ layer.weight_q.T.astype(np.int64)
        acc = acc + layer.bias_q.astype(np.int64)
        acc = np.clip(acc, INT32_MIN, INT32_MAX)
        y = out_zp + _rshift_round(acc * np.int64(m0), shift)
        # ReLU is the clamp at the output zero-point.
        x = np.clip(y, out_zp if i < last else 0, UINT8_MAX)
        codes.append(x)
    return codes


def dequantize_output(qmodel: QuantizedModel, yq) -> np.ndarray:
    yq = np.asarray(yq, dtype=np.int64)
    return (yq - qmodel.output_zp).astype(np.float64) * np.float64(qmodel.output_scale)


def predict_i8(qmodel: QuantizedModel, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != qmodel.input_dim:
        raise ShapeError(f"expected inputs of width {qmodel.input_dim}, got shape {x.shape}")
    return dequantize_output(qmodel, run_integer(qmodel, quantize_input(qmodel, x)))[:, 0]


def forward_i8(qmodel: QuantizedModel, x) -> float:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ShapeError("forward_i8 takes a single input vector")
    return float(predict_i8(qmodel, x)[0])


def dequantize_weights(layer: QuantLayer) -> np.ndarray:
    return layer.weight_q.astype(np.float32) * layer.weight_scale

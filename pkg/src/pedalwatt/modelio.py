"""Binary model files.

Layout (little-endian)::

    b"PWM1"  u16 version  u8 dtype (0 = f32, 1 = int8)  u8 n_layers
    u32[n_layers + 1] dims
    f32[7][2] normalisation bounds (force, accel x, accel z, gyro y,
              cadence, amplitude, offset)
    per layer, f32:  f32 W[out * in] row-major, f32 b[out]
    per layer, int8: f32 input_scale, u8 input_zp, f32 weight_scale,
                     i8 W[out * in], i32 b[out]
    int8 only: f32 output_scale, u8 output_zp
    u32 CRC32 of everything above
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from .errors import BadMagicError, ChecksumError, ModelFormatError, TruncatedModelError
from .features import NormalizationBounds
from .model import DenseModel
from .quant import QuantizedModel, QuantLayer

MAGIC = b"PWM1"
VERSION = 1
DTYPE_F32 = 0
DTYPE_INT8 = 1

Model = Union[DenseModel, QuantizedModel]


def serialize_model(model: Model) -> bytes:
    if isinstance(model, DenseModel):
        dtype = DTYPE_F32
    elif isinstance(model, QuantizedModel):
        dtype = DTYPE_INT8
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    dims = model.layer_dims
    parts = [
        MAGIC,
        struct.pack("<HBB", VERSION, dtype, len(dims) - 1),
        np.asarray(dims, dtype="<u4").tobytes(),
        model.bounds.as_pairs().astype("<f4").tobytes(),
    ]
    if dtype == DTYPE_F32:
        for w, b in zip(model.weights, model.biases):
            parts.append(w.astype("<f4").tobytes())
            parts.append(b.astype("<f4").tobytes())
    else:
        for layer in model.layers:
            parts.append(struct.pack("<fBf", layer.input_scale, layer.input_zp, layer.weight_scale))
            parts.append(layer.weight_q.astype("i1").tobytes())
            parts.append(layer.bias_q.astype("<i4").tobytes())
        parts.append(struct.pack("<fB", model.output_scale, model.output_zp))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedModelError(f"model stream ends at byte {len(self.data)}, needed {self.pos + n}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def deserialize_model(data: bytes) -> Model:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not a model file (bad magic)")
    if len(data) < 12:
        raise TruncatedModelError("model stream too short for a header")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    r = _Reader(body)
    r.take(4)
    version, dtype, n_layers = r.unpack("<HBB")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if dtype not in (DTYPE_F32, DTYPE_INT8):
        raise ModelFormatError(f"unknown dtype tag {dtype}")
    try:
        dims = tuple(int(d) for d in r.array("<u4", n_layers + 1))
        bounds = NormalizationBounds.from_pairs(r.array("<f4", 14).astype(np.float64))
        if dtype == DTYPE_F32:
            ws, bs = [], []
            for a, b in zip(dims[:-1], dims[1:]):
                ws.append(r.array("<f4", a * b).reshape(b, a))
                bs.append(r.array("<f4", b))
        else:
            layers = []
            for a, b in zip(dims[:-1], dims[1:]):
                in_scale, in_zp, w_scale = r.unpack("<fBf")
                wq = r.array("i1", a * b).reshape(b, a)
                bq = r.array("<i4", b)
                layers.append(QuantLayer(wq, w_scale, in_scale, in_zp, bq))
            out_scale, out_zp = r.unpack("<fB")
    except TruncatedModelError:
        # A short file shows up here as a missing payload, not as a CRC mismatch.
        if zlib.crc32(body) != crc:
            raise TruncatedModelError("model stream truncated") from None
        raise
    if r.pos != len(body):
        if zlib.crc32(body) != crc:
            raise ChecksumError("CRC32 mismatch")
        raise ModelFormatError(f"{len(body) - r.pos} unexpected trailing bytes")
    if zlib.crc32(body) != crc:
        raise ChecksumError("CRC32 mismatch")
    if dtype == DTYPE_F32:
        return DenseModel(dims, tuple(ws), tuple(bs), bounds)
    return QuantizedModel(dims, tuple(layers), out_scale, out_zp, bounds)


def save_model(model: Model, path) -> int:
    data = serialize_model(model)
    Path(path).write_bytes(data)
    return len(data)


def load_model(path) -> Model:
    return deserialize_model(Path(path).read_bytes())


def serialized_size(model: Model) -> int:
    return len(serialize_model(model))

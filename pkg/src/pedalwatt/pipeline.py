"""Streaming stroke segmentation.

Raw samples are clamped, low-pass filtered and written to a ring buffer.
Peaks of the filtered force are committed once enough look-ahead has been
buffered to make the decision final, and every pair of consecutive peaks
becomes a :class:`~pedalwatt.features.StrokeSegment`.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError, TimestampError
from .features import (
    NormalizationBounds,
    StrokeFeatures,
    StrokeSegment,
    TARGET_LEN,
    ValidationCriteria,
    extract_features,
    normalize,
    resample_to_length,
    validate_candidate,
)
from .peaks import peak_candidates, refine_peak, suppress_close
from .stream import CHANNELS, FORCE_RANGE_N, SAMPLE_RATE_HZ, SensorStream

log = logging.getLogger(__name__)

_CHUNK = 64


def lowpass_alpha(cutoff_hz: float, sample_rate_hz: float) -> float:
    if not 0.0 < cutoff_hz < sample_rate_hz / 2.0:
        raise ConfigurationError(
            f"cutoff {cutoff_hz} Hz outside (0, {sample_rate_hz / 2.0}) for a {sample_rate_hz} Hz stream"
        )
    dt = 1.0 / sample_rate_hz
    rc = 1.0 / (2.0 * math.pi * cutoff_hz)
    return dt / (rc + dt)


class LowpassFilter:
    """Single-pole IIR, one state per channel, primed with the first sample."""

    def __init__(self, cutoff_hz: float, sample_rate_hz: float, n_channels: int = len(CHANNELS)):
        self.alpha = lowpass_alpha(cutoff_hz, sample_rate_hz)
        self._b = np.array([self.alpha])
        self._a = np.array([1.0, -(1.0 - self.alpha)])
        self._zi = None
        self.n_channels = n_channels

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.n_channels)
        if x.shape[0] == 0:
            return x.copy()
        if self._zi is None:
            self._zi = ((1.0 - self.alpha) * x[0])[np.newaxis, :]
        y, self._zi = lfilter(self._b, self._a, x, axis=0, zi=self._zi)
        return y


def lowpass_filter(stream: SensorStream, cutoff_hz: float = 10.0, sample_rate_hz: float = SAMPLE_RATE_HZ) -> SensorStream:
    """Filter every channel with y[n] = y[n-1] + alpha * (x[n] - y[n-1])."""
    if len(stream) == 0:
        raise ConfigurationError("cannot filter an empty stream")
    filt = LowpassFilter(cutoff_hz, sample_rate_hz, stream.values.shape[1])
    return SensorStream(stream.timestamp_us, filt(stream.values))


class RingBuffer:
    """Fixed-capacity sample store addressed by absolute sample index."""

    def __init__(self, capacity: int, n_channels: int = len(CHANNELS)):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.capacity = capacity
        self._ts = np.zeros(capacity, dtype=np.int64)
        self._vals = np.zeros((capacity, n_channels), dtype=np.float64)
        self.write_index = 0
        self.count = 0

    def __len__(self):
        return min(self.count, self.capacity)

    @property
    def oldest(self) -> int:
        """Absolute index of the oldest retained sample."""
        return max(0, self.count - self.capacity)

    def extend(self, ts: np.ndarray, vals: np.ndarray) -> None:
        n = ts.shape[0]
        if n > self.capacity:
            ts, vals = ts[-self.capacity :], vals[-self.capacity :]
            self.count += n - self.capacity
            self.write_index = (self.write_index + n - self.capacity) % self.capacity
            n = self.capacity
        idx = (self.write_index + np.arange(n)) % self.capacity
        self._ts[idx] = ts
        self._vals[idx] = vals
        self.write_index = (self.write_index + n) % self.capacity
        self.count += n

    def slice(self, start: int, stop: int):
        """Copies of timestamps and values for absolute indices ``[start, stop)``."""
        if start < self.oldest or stop > self.count or start > stop:
            raise IndexError(f"[{start}, {stop}) not retained (have [{self.oldest}, {self.count}))")
        idx = np.arange(start, stop) % self.capacity
        return self._ts[idx], self._vals[idx]


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate_hz: float = SAMPLE_RATE_HZ
    cutoff_hz: float = 10.0
    min_distance_samples: int = 25
    criteria: ValidationCriteria = field(default_factory=ValidationCriteria)
    bounds: NormalizationBounds = field(default_factory=NormalizationBounds)
    target_len: int = TARGET_LEN

    def __post_init__(self):
        lowpass_alpha(self.cutoff_hz, self.sample_rate_hz)
        if self.min_distance_samples < 1:
            raise ConfigurationError("min_distance_samples must be >= 1")
        if self.target_len < 2:
            raise ConfigurationError("target_len must be >= 2")

    @property
    def min_prominence_n(self) -> float:
        return self.criteria.min_prominence_n

    @property
    def max_stroke_samples(self) -> int:
        return math.ceil(self.criteria.max_duration_s * self.sample_rate_hz)

    @property
    def half_window(self) -> int:
        """Search radius for a peak's bases; one slowest stroke either side."""
        return self.max_stroke_samples

    @property
    def lookahead(self) -> int:
        """Samples needed after a peak before it can be committed."""
        return self.half_window + self.min_distance_samples - 1

    @property
    def buffer_capacity(self) -> int:
        return 2 * self.max_stroke_samples + 2 * (self.lookahead + 1) + _CHUNK

    @property
    def input_dim(self) -> int:
        return len(CHANNELS) * self.target_len + 3


class Segmenter:
    """Single-owner state machine turning samples into stroke segments.

    ``push`` and ``push_many`` return the segments completed by the new
    data; ``flush`` ends the stream and releases peaks still waiting for
    look-ahead. Feeding the same samples in any chunking gives the same
    segments.
    """

    def __init__(self, config: PipelineConfig = PipelineConfig()):
        self.config = config
        self.filter = LowpassFilter(config.cutoff_hz, config.sample_rate_hz)
        self.buffer = RingBuffer(config.buffer_capacity)
        self.diagnostics: Counter = Counter()
        self._last_ts = None
        self._next_decide = 0
        self._last_peak = None
        self._last_peak_us = None
        self._closed = False

    def push(self, sample) -> List[StrokeSegment]:
        ts = np.array([int(sample[0])], dtype=np.int64)
        vals = np.array([[float(v) for v in sample[1:5]]])
        return self._push_arrays(ts, vals)

    def push_many(self, stream) -> List[StrokeSegment]:
        if not isinstance(stream, SensorStream):
            stream = SensorStream.from_samples(stream)
        return self._push_arrays(stream.timestamp_us, stream.values)

    def flush(self) -> List[StrokeSegment]:
        if self._closed:
            return []
        self._closed = True
        if self.buffer.count == 0:
            return []
        return self._decide(self._next_decide, self.buffer.count - 1, final=True)

    def _push_arrays(self, ts, vals) -> List[StrokeSegment]:
        if self._closed:
            raise ConfigurationError("segmenter already flushed")
        if ts.shape[0] == 0:
            return []
        prev = self._last_ts
        if (prev is not None and ts[0] <= prev) or np.any(np.diff(ts) <= 0):
            self.diagnostics["rejected_timestamp"] += 1
            raise TimestampError(f"non-monotonic timestamp after {prev} us; sample rejected")
        vals = vals.copy()
        np.clip(vals[:, 0], *FORCE_RANGE_N, out=vals[:, 0])
        out = []
        for s in range(0, ts.shape[0], _CHUNK):
            t_chunk = ts[s : s + _CHUNK]
            self.buffer.extend(t_chunk, self.filter(vals[s : s + _CHUNK]))
            self._last_ts = int(t_chunk[-1])
            ready = self.buffer.count - 1 - self.config.lookahead
            if ready >= self._next_decide:
                out.extend(self._decide(self._next_decide, ready))
        return out

    def _decide(self, i0: int, i1: int, final: bool = False) -> List[StrokeSegment]:
        cfg = self.config
        d, h = cfg.min_distance_samples, cfg.half_window
        n = self.buffer.count
        a = max(0, i0 - (d - 1) - h)
        b = n if final else min(n, i1 + d + h)
        _, vals = self.buffer.slice(a, b)
        x = vals[:, 0]
        cands = peak_candidates(x, cfg.min_prominence_n, i0 - (d - 1) - a, i1 + (d - 1) - a, h)
        peaks = suppress_close(x, cands, d, i0 - a, i1 - a)
        self._next_decide = i1 + 1
        out = []
        for p in peaks:
            seg = self._commit(int(p) + a, x, int(p))
            if seg is not None:
                out.append(seg)
        return out

    def _commit(self, p_abs: int, x: np.ndarray, p_local: int):
        ts, _ = self.buffer.slice(p_abs - 1, p_abs + 2)
        delta = refine_peak(x, p_local)
        step = ts[2] - ts[1] if delta >= 0 else ts[1] - ts[0]
        peak_us = int(round(ts[1] + delta * step))
        prev, prev_us = self._last_peak, self._last_peak_us
        self._last_peak, self._last_peak_us = p_abs, peak_us
        if prev is None:
            return None
        duration = (peak_us - prev_us) * 1e-6
        if duration > self.config.criteria.max_duration_s or prev < self.buffer.oldest:
            self.diagnostics["discarded_long"] += 1
            log.debug("discarding %.3f s candidate ending at sample %d", duration, p_abs)
            return None
        seg_ts, seg_vals = self.buffer.slice(prev, p_abs + 1)
        self.diagnostics["segments"] += 1
        return StrokeSegment(seg_ts, seg_vals, prev_us, peak_us)


def segment_stream(stream: SensorStream, config: PipelineConfig = PipelineConfig()) -> List[StrokeSegment]:
    """All stroke candidates in a complete recording."""
    seg = Segmenter(config)
    out = seg.push_many(stream)
    out.extend(seg.flush())
    return out


class ProcessedStroke(NamedTuple):
    segment: StrokeSegment
    features: StrokeFeatures
    input: np.ndarray


class StrokePipeline:
    """Segmenter plus validation and featurisation.

    Only accepted strokes are returned; rejections are tallied in
    ``rejections`` by reason.
    """

    def __init__(self, config: PipelineConfig = PipelineConfig()):
        self.config = config
        self.segmenter = Segmenter(config)
        self.rejections: Counter = Counter()

    def push(self, sample) -> List[ProcessedStroke]:
        return self._process(self.segmenter.push(sample))

    def push_many(self, stream) -> List[ProcessedStroke]:
        return self._process(self.segmenter.push_many(stream))

    def flush(self) -> List[ProcessedStroke]:
        return self._process(self.segmenter.flush())

    def _process(self, segments) -> List[ProcessedStroke]:
        out = []
        for seg in segments:
            verdict = validate_candidate(seg, self.config.criteria)
            if not verdict:
                self.rejections[verdict.reason] += 1
                continue
            feats = extract_features(seg)
            x = normalize(resample_to_length(seg, self.config.target_len), feats, self.config.bounds)
            out.append(ProcessedStroke(seg, feats, x))
        return out


def process_stream(stream: SensorStream, config: PipelineConfig = PipelineConfig()) -> List[ProcessedStroke]:
    pipe = StrokePipeline(config)
    out = pipe.push_many(stream)
    out.extend(pipe.flush())
    return out

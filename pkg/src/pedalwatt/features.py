"""Per-stroke validation, resampling, feature extraction and normalisation."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InvalidSegmentError
from .stream import CHANNELS

TARGET_LEN = 32
N_FEATURES = 3
INPUT_DIM = len(CHANNELS) * TARGET_LEN + N_FEATURES  # 131


@dataclass(frozen=True, eq=False)
class StrokeSegment:
    """Filtered samples between two force maxima, both boundary peaks included.

    ``start_us`` and ``end_us`` are the sub-sample peak times, so they can sit
    slightly off the first and last sample timestamps.
    """

    timestamp_us: np.ndarray
    values: np.ndarray
    start_us: int
    end_us: int

    def __post_init__(self):
        ts = np.asarray(self.timestamp_us, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape != (ts.shape[0], len(CHANNELS)):
            raise InvalidSegmentError(f"bad segment shape {vals.shape}")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamp_us", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start_us", int(self.start_us))
        object.__setattr__(self, "end_us", int(self.end_us))

    def __len__(self) -> int:
        return self.timestamp_us.shape[0]

    def __eq__(self, other):
        if not isinstance(other, StrokeSegment):
            return NotImplemented
        return (
            self.start_us == other.start_us
            and self.end_us == other.end_us
            and np.array_equal(self.timestamp_us, other.timestamp_us)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"StrokeSegment(n={len(self)}, start_us={self.start_us}, end_us={self.end_us})"

    @property
    def force(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def duration_s(self) -> float:
        return (self.end_us - self.start_us) * 1e-6


@dataclass(frozen=True)
class StrokeFeatures:
    cadence_rpm: float
    amplitude_n: float
    offset_n: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cadence_rpm, self.amplitude_n, self.offset_n])


@dataclass(frozen=True)
class ValidationCriteria:
    """Acceptance thresholds for stroke candidates.

    The default duration window corresponds to cadences of 30 to 140 rpm.
    ``min_prominence_n`` is the peak detector's threshold, kept here so one
    object carries every stroke-shape threshold.
    """

    min_amplitude_n: float = 20.0
    min_duration_s: float = 0.43
    max_duration_s: float = 2.0
    min_prominence_n: float = 20.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigurationError(f"{f.name} must be positive")
        if not self.min_duration_s < self.max_duration_s:
            raise ConfigurationError("min_duration_s must be below max_duration_s")


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.accepted


ACCEPT = Verdict(True)


def validate_candidate(segment: StrokeSegment, criteria: ValidationCriteria = ValidationCriteria()) -> Verdict:
    """Check amplitude, duration and rise-fall shape, in that order.

    Returns a falsy :class:`Verdict` naming the first failed check
    (``"amplitude"``, ``"duration"`` or ``"shape"``).
    """
    force = segment.force
    if force.max() - force.min() < criteria.min_amplitude_n:
        return Verdict(False, "amplitude")
    duration = segment.duration_s
    if not criteria.min_duration_s <= duration <= criteria.max_duration_s:
        return Verdict(False, "duration")
    k = int(np.argmin(force))
    if k == 0 or k == force.shape[0] - 1:
        return Verdict(False, "shape")
    return ACCEPT


def resample_to_length(segment, target_len: int = TARGET_LEN) -> np.ndarray:
    """Linearly interpolate every channel onto ``target_len`` evenly spaced points.

    Accepts a :class:`StrokeSegment` or a raw array of shape ``(n,)`` or
    ``(n, channels)``; returns the same rank with ``n`` replaced by
    ``target_len``. Endpoints are reproduced exactly.
    """
    values = segment.values if isinstance(segment, StrokeSegment) else np.asarray(segment, dtype=np.float64)
    n = values.shape[0]
    if n < 2:
        raise InvalidSegmentError(f"segment has {n} samples, need at least 2")
    if target_len < 2:
        raise ConfigurationError("target_len must be >= 2")
    src = np.arange(n, dtype=np.float64)
    dst = np.linspace(0.0, n - 1, target_len)
    if values.ndim == 1:
        return np.interp(dst, src, values)
    return np.stack([np.interp(dst, src, values[:, c]) for c in range(values.shape[1])], axis=1)


def extract_features(segment: StrokeSegment) -> StrokeFeatures:
    duration = segment.duration_s
    if duration <= 0:
        raise InvalidSegmentError("segment has zero duration")
    force = segment.force
    lo = float(force.min())
    return StrokeFeatures(
        cadence_rpm=60.0 / duration,
        amplitude_n=float(force.max()) - lo,
        offset_n=lo,
    )


@dataclass(frozen=True)
class NormalizationBounds:
    """Fixed (lo, hi) ranges mapped onto [0, 1] for each channel and feature."""

    force_n: tuple = (0.0, 1000.0)
    accel_x_g: tuple = (-8.0, 8.0)
    accel_z_g: tuple = (-8.0, 8.0)
    gyro_y_dps: tuple = (-500.0, 500.0)
    cadence_rpm: tuple = (0.0, 200.0)
    amplitude_n: tuple = (0.0, 1000.0)
    offset_n: tuple = (0.0, 500.0)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not hi > lo:
                raise ConfigurationError(f"bounds for {f.name}: hi ({hi}) must exceed lo ({lo})")
            object.__setattr__(self, f.name, (float(lo), float(hi)))

    def as_pairs(self) -> np.ndarray:
        """``(7, 2)`` array: four channels then three features."""
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)

    @classmethod
    def from_pairs(cls, pairs) -> "NormalizationBounds":
        pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
        names = [f.name for f in fields(cls)]
        if pairs.shape[0] != len(names):
            raise ConfigurationError(f"expected {len(names)} bound pairs, got {pairs.shape[0]}")
        return cls(**{n: (float(p[0]), float(p[1])) for n, p in zip(names, pairs)})


def _scale(x, lo, hi):
    return np.clip((np.asarray(x, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def normalize(channels, features: StrokeFeatures, bounds: NormalizationBounds = NormalizationBounds()) -> np.ndarray:
    """Build the network input from resampled channels and stroke features.

    ``channels`` has shape ``(target_len, 4)``. The result is channel-major:
    all force samples, then accel-x, accel-z, gyro-y, then cadence,
    amplitude and offset. Out-of-range values are clamped.
    """
    channels = np.asarray(channels, dtype=np.float64)
    pairs = bounds.as_pairs()
    if channels.ndim != 2 or channels.shape[1] != len(CHANNELS):
        raise ConfigurationError(f"channels must have shape (n, {len(CHANNELS)})")
    blocks = [_scale(channels[:, c], *pairs[c]) for c in range(len(CHANNELS))]
    feats = features.as_array()
    blocks.append(np.array([_scale(feats[k], *pairs[len(CHANNELS) + k]) for k in range(N_FEATURES)]))
    out = np.concatenate(blocks)
    out.setflags(write=False)
    return out


def featurize(
    segment: StrokeSegment,
    bounds: NormalizationBounds = NormalizationBounds(),
    target_len: int = TARGET_LEN,
) -> np.ndarray:
    """Resample, extract features and normalise one accepted stroke."""
    return normalize(resample_to_length(segment, target_len), extract_features(segment), bounds)

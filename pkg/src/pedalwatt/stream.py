"""Sensor sample types.

A stream is stored column-wise (one numpy array per channel) because every
consumer downstream is vectorised; :class:`SensorSample` is the per-sample
view used by the streaming segmenter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, TimestampError

SAMPLE_RATE_HZ = 58.3
FORCE_RANGE_N = (0.0, 1000.0)
CHANNELS = ("force_n", "accel_x_g", "accel_z_g", "gyro_y_dps")
SENSOR_HEADER = ("timestamp_us",) + CHANNELS


class SensorSample(NamedTuple):
    timestamp_us: int
    force_n: float
    accel_x_g: float
    accel_z_g: float
    gyro_y_dps: float


@dataclass(frozen=True, eq=False)
class SensorStream:
    """Column-wise sequence of sensor samples.

    ``values`` has shape ``(n, 4)`` with columns ordered as :data:`CHANNELS`.
    Timestamps must strictly increase.
    """

    timestamp_us: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamp_us, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(CHANNELS):
            raise ConfigurationError(f"values must have shape (n, {len(CHANNELS)}), got {vals.shape}")
        if vals.shape[0] != ts.shape[0]:
            raise ConfigurationError("timestamp and value lengths differ")
        if ts.size > 1:
            bad = np.flatnonzero(np.diff(ts) <= 0)
            if bad.size:
                raise TimestampError(f"timestamps not strictly increasing at sample {bad[0] + 1}")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamp_us", ts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_samples(cls, samples) -> "SensorStream":
        samples = list(samples)
        if not samples:
            return cls(np.zeros(0, np.int64), np.zeros((0, 4)))
        ts = np.array([s[0] for s in samples], dtype=np.int64)
        vals = np.array([s[1:5] for s in samples], dtype=np.float64)
        return cls(ts, vals)

    def __len__(self) -> int:
        return self.timestamp_us.shape[0]

    def __getitem__(self, index):
        if isinstance(index, slice):
            return SensorStream(self.timestamp_us[index], self.values[index])
        row = self.values[index]
        return SensorSample(int(self.timestamp_us[index]), *(float(v) for v in row))

    def __iter__(self) -> Iterator[SensorSample]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, SensorStream):
            return NotImplemented
        return np.array_equal(self.timestamp_us, other.timestamp_us) and np.array_equal(
            self.values, other.values
        )

    @property
    def force(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def duration_s(self) -> float:
        if len(self) < 2:
            return 0.0
        return (int(self.timestamp_us[-1]) - int(self.timestamp_us[0])) * 1e-6

    def clamped(self) -> "SensorStream":
        """Copy with force limited to the load cell range."""
        vals = self.values.copy()
        np.clip(vals[:, 0], *FORCE_RANGE_N, out=vals[:, 0])
        return SensorStream(self.timestamp_us, vals)


def sample_timestamps(n: int, sample_rate_hz: float = SAMPLE_RATE_HZ, start_us: int = 0) -> np.ndarray:
    """Integer timestamps of ``n`` evenly spaced samples, rounded to the microsecond."""
    return start_us + np.rint(np.arange(n) * (1e6 / sample_rate_hz)).astype(np.int64)

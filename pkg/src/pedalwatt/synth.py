"""Synthetic cleat-force and IMU rides with exact power ground truth.

One leg is simulated. The crank angle integrates the commanded cadence, the
tangential pedal force follows ``A_k * max(0, sin(theta))**1.5`` on each
downstroke ``k`` and the load cell sees a scaled, offset, noisy copy of it.
Ground-truth power per stroke is the integral of force times pedal speed on
a grid ten times finer than the sensor rate. Strokes run from one force
peak (crank horizontal and forward) to the next, matching what the
segmenter cuts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import lfilter

from .errors import ConfigurationError
from .stream import FORCE_RANGE_N, SAMPLE_RATE_HZ, SensorStream, sample_timestamps

G = 9.80665
OVERSAMPLE = 10
# Mean of max(0, sin)**1.5 over a full revolution.
SHAPE_MEAN = math.gamma(1.25) / (2.0 * math.sqrt(math.pi) * math.gamma(1.75))
MAX_PROTOCOL_POWER_W = 300.0


@dataclass(frozen=True)
class NoiseLevels:
    force_n: float = 2.0
    accel_g: float = 0.02
    gyro_dps: float = 2.0
    # Per-revolution std of the multiplicative force random walk.
    power_walk: float = 0.03

    @classmethod
    def zero(cls) -> "NoiseLevels":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RideProfile:
    """Piecewise-constant ride command.

    ``segments`` holds ``(duration_s, target_power_w, cadence_rpm)`` rows.
    Transitions between rows are smoothed with a first-order lag of
    ``transition_s``.
    """

    segments: Tuple[Tuple[float, float, float], ...]
    rider_mass_kg: float = 65.0
    noise: NoiseLevels = field(default_factory=NoiseLevels)
    crank_length_m: float = 0.1725
    force_transfer: float = 0.8
    force_offset_n: float = 25.0
    foot_pitch_deg: float = 12.0
    transition_s: float = 1.5
    walk_memory: float = 0.7
    name: str = "custom"

    def __post_init__(self):
        segs = tuple(tuple(float(v) for v in s) for s in self.segments)
        if not segs:
            raise ConfigurationError("profile has no segments")
        for dur, power, cad in segs:
            if dur <= 0:
                raise ConfigurationError(f"segment duration must be positive, got {dur}")
            if power < 0:
                raise ConfigurationError(f"target power must be >= 0, got {power}")
            if not 30.0 <= cad <= 140.0:
                raise ConfigurationError(f"cadence {cad} rpm outside [30, 140]")
        if self.crank_length_m <= 0 or self.force_transfer <= 0:
            raise ConfigurationError("crank length and force transfer must be positive")
        if not 0.0 <= self.walk_memory < 1.0:
            raise ConfigurationError("walk_memory must be in [0, 1)")
        object.__setattr__(self, "segments", segs)

    @property
    def duration_s(self) -> float:
        return sum(s[0] for s in self.segments)

    @classmethod
    def constant(cls, duration_s: float, power_w: float, cadence_rpm: float, **kwargs) -> "RideProfile":
        return cls(((duration_s, power_w, cadence_rpm),), **kwargs)


class GroundTruthStroke(NamedTuple):
    start_us: int
    end_us: int
    true_power_w: float
    true_cadence_rpm: float


@dataclass(frozen=True, eq=False)
class Ride:
    """Output of :func:`generate_ride`.

    ``power_time_s`` and ``power_w`` are the oversampled instantaneous
    mechanical power that the ground truth integrates.
    """

    stream: SensorStream
    truth: List[GroundTruthStroke]
    duration_s: float
    power_time_s: np.ndarray
    power_w: np.ndarray
    torque_nm: np.ndarray
    omega_rad_s: np.ndarray

    def __iter__(self):
        # Allows ``stream, truth = generate_ride(...)``.
        return iter((self.stream, self.truth))

    def reference(self, seed: int = 0, rate_hz: float = 4.0, noise_pct: float = 1.5):
        return reference_meter(self.truth, rate_hz, noise_pct, seed=seed, start_us=0,
                               end_us=int(round(self.duration_s * 1e6)))


def _lag(x: np.ndarray, dt: float, tau: float) -> np.ndarray:
    if tau <= 0:
        return x.copy()
    a = dt / (tau + dt)
    y, _ = lfilter([a], [1.0, -(1.0 - a)], x, zi=[(1.0 - a) * x[0]])
    return y


def generate_ride(profile: RideProfile, seed: int = 0, sample_rate_hz: float = SAMPLE_RATE_HZ) -> Ride:
    """Simulate a ride; deterministic for a given ``(profile, seed)``."""
    if not isinstance(profile, RideProfile):
        raise ConfigurationError("profile must be a RideProfile")
    rng_walk, rng_force, rng_accel, rng_gyro = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )
    noise = profile.noise
    r = profile.crank_length_m
    duration = profile.duration_s

    fine_rate = sample_rate_hz * OVERSAMPLE
    n_coarse = int(math.floor(duration * sample_rate_hz - 1e-9)) + 1
    n_fine = (n_coarse - 1) * OVERSAMPLE + 1
    dt = 1.0 / fine_rate
    t = np.arange(n_fine) * dt

    seg = np.asarray(profile.segments)
    edges = np.cumsum(seg[:, 0])
    which = np.minimum(np.searchsorted(edges, t, side="right"), len(seg) - 1)
    power_cmd = _lag(seg[which, 1], dt, profile.transition_s)
    cadence = _lag(seg[which, 2], dt, profile.transition_s)

    omega = 2.0 * np.pi * cadence / 60.0
    omega_dot = np.gradient(omega, dt)
    theta = cumulative_trapezoid(omega, dx=dt, initial=0.0)

    # One amplitude per downstroke, chosen at the top of the stroke.
    n_rev = int(theta[-1] // (2.0 * np.pi)) + 1
    rev_t = np.interp(2.0 * np.pi * np.arange(n_rev), theta, t)
    base = np.interp(rev_t, t, power_cmd) / (SHAPE_MEAN * np.interp(rev_t, t, omega) * r)
    walk = np.zeros(n_rev)
    if noise.power_walk > 0:
        eps = rng_walk.normal(0.0, noise.power_walk, n_rev)
        walk = lfilter([1.0], [1.0, -profile.walk_memory], eps)
    amp = np.maximum(base * (1.0 + walk), 0.0)

    rev = np.minimum((theta // (2.0 * np.pi)).astype(np.int64), n_rev - 1)
    shape = np.maximum(np.sin(theta), 0.0) ** 1.5
    f_tan = amp[rev] * shape
    torque = f_tan * r
    power = torque * omega

    energy = cumulative_trapezoid(power, t, initial=0.0)
    n_bounds = int((theta[-1] - np.pi / 2.0) // (2.0 * np.pi)) + 1
    bounds = np.interp(np.pi / 2.0 + 2.0 * np.pi * np.arange(n_bounds), theta, t)
    e_bounds = np.interp(bounds, t, energy)
    truth = []
    for j in range(n_bounds - 1):
        period = bounds[j + 1] - bounds[j]
        truth.append(
            GroundTruthStroke(
                int(round(bounds[j] * 1e6)),
                int(round(bounds[j + 1] * 1e6)),
                float(max((e_bounds[j + 1] - e_bounds[j]) / period, 0.0)),
                float(60.0 / period),
            )
        )

    k = np.arange(n_coarse) * OVERSAMPLE
    th, w, wd = theta[k], omega[k], omega_dot[k]
    force = profile.force_transfer * f_tan[k] + profile.force_offset_n
    if noise.force_n > 0:
        force = force + rng_force.normal(0.0, noise.force_n, n_coarse)
    force = np.clip(force, *FORCE_RANGE_N)

    # Pedal at r*(sin th, cos th): x forward, z up, theta = 0 at top dead centre.
    acc_x = r * (wd * np.cos(th) - w**2 * np.sin(th)) / G
    acc_z = r * (-wd * np.sin(th) - w**2 * np.cos(th)) / G + 1.0
    pitch_amp = np.radians(profile.foot_pitch_deg)
    pitch = pitch_amp * np.sin(th)
    cp, sp = np.cos(pitch), np.sin(pitch)
    shoe_x = cp * acc_x + sp * acc_z
    shoe_z = -sp * acc_x + cp * acc_z
    gyro = np.degrees(pitch_amp * w * np.cos(th))
    if noise.accel_g > 0:
        shoe_x = shoe_x + rng_accel.normal(0.0, noise.accel_g, n_coarse)
        shoe_z = shoe_z + rng_accel.normal(0.0, noise.accel_g, n_coarse)
    if noise.gyro_dps > 0:
        gyro = gyro + rng_gyro.normal(0.0, noise.gyro_dps, n_coarse)

    stream = SensorStream(
        sample_timestamps(n_coarse, sample_rate_hz),
        np.column_stack([force, shoe_x, shoe_z, gyro]),
    )
    return Ride(stream, truth, duration, t, power, torque, omega)


class ReferencePowerSample(NamedTuple):
    timestamp_us: int
    power_w: float


def reference_meter(
    truth: Sequence[GroundTruthStroke],
    rate_hz: float = 4.0,
    noise_pct: float = 1.5,
    seed: int = 0,
    start_us: int | None = None,
    end_us: int | None = None,
) -> List[ReferencePowerSample]:
    """Crank-meter stand-in: stroke-average power sampled and held at ``rate_hz``.

    Each tick reports the power of the stroke containing it (the nearest
    stroke outside the covered span) times ``1 + N(0, noise_pct / 100)``,
    floored at zero. Ticks cover ``[start_us, end_us)``, by default the
    span of ``truth``.
    """
    if len(truth) == 0:
        raise ConfigurationError("reference meter needs at least one stroke")
    if rate_hz <= 0:
        raise ConfigurationError("rate_hz must be positive")
    starts = np.array([s.start_us for s in truth], dtype=np.int64)
    powers = np.array([s.true_power_w for s in truth])
    start_us = int(starts[0]) if start_us is None else int(start_us)
    end_us = int(truth[-1].end_us) if end_us is None else int(end_us)
    n = int(math.floor((end_us - start_us) * rate_hz / 1e6 + 1e-9))
    ticks = start_us + np.rint(np.arange(n) * (1e6 / rate_hz)).astype(np.int64)
    idx = np.clip(np.searchsorted(starts, ticks, side="right") - 1, 0, len(truth) - 1)
    value = powers[idx]
    if noise_pct > 0:
        value = value * (1.0 + np.random.default_rng(seed).normal(0.0, noise_pct / 100.0, n))
    value = np.maximum(value, 0.0)
    return [ReferencePowerSample(int(a), float(b)) for a, b in zip(ticks, value)]


PROTOCOL_BANDS_W = ((60, 100), (100, 140), (140, 180), (180, 220), (220, 250), (250, 300))
PROTOCOL_CADENCES = (60.0, 75.0, 90.0, 105.0)
PRESETS = ("band-sweep", "generalization", "outdoor-like")


def protocol_profile(name: str, seed: int = 0) -> RideProfile:
    """Ride presets.

    ``band-sweep`` rides five minutes in each of six power bands up to
    300 W (30 minutes), changing power within the band and cadence among
    60/75/90/105 rpm every 15 s. ``generalization`` is 12 minutes of random
    power over 60-300 W. ``outdoor-like`` is 25 minutes with surges and
    heavier sensor noise.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, PRESETS.index(name) if name in PRESETS else 99]))
    rows = []
    if name == "band-sweep":
        for lo, hi in PROTOCOL_BANDS_W:
            for _ in range(20):
                rows.append((15.0, rng.uniform(lo, hi), float(rng.choice(PROTOCOL_CADENCES))))
        return RideProfile(tuple(rows), name=name)
    if name == "generalization":
        for _ in range(48):
            rows.append((15.0, rng.uniform(60.0, MAX_PROTOCOL_POWER_W), rng.uniform(60.0, 105.0)))
        return RideProfile(tuple(rows), name=name)
    if name == "outdoor-like":
        total = 0.0
        while total < 25 * 60 - 1e-9:
            power = rng.uniform(80.0, 260.0)
            cad = rng.uniform(65.0, 100.0)
            if rng.random() < 0.15:
                rows.append((10.0, min(MAX_PROTOCOL_POWER_W, power * 1.5), min(cad + 10.0, 110.0)))
                total += 10.0
            dur = min(20.0, 25 * 60 - total)
            if dur > 0:
                rows.append((dur, power, cad))
                total += dur
        noise = NoiseLevels(force_n=6.0, accel_g=0.15, gyro_dps=8.0, power_walk=0.06)
        return RideProfile(tuple(rows), noise=noise, name=name)
    raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")

"""Labelled strokes: fusing segmented strokes with the reference power stream.

Also owns the CSV formats for sensor, reference, ground-truth and dataset
files, and the power-balance histogram used to spot under-sampled bands.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, ConfigurationError, ParseError
from .pipeline import PipelineConfig, process_stream
from .stream import SENSOR_HEADER, SensorStream
from .synth import GroundTruthStroke, ReferencePowerSample

REFERENCE_HEADER = ("timestamp_us", "power_w")
TRUTH_HEADER = ("start_us", "end_us", "true_power_w", "true_cadence_rpm")
DATASET_META = ("ride_id", "start_us", "end_us", "label_power_w")
ALIGN_TOLERANCE_US = 500_000


@dataclass(frozen=True, eq=False)
class LabeledStroke:
    input: np.ndarray
    label_power_w: float
    start_us: int
    end_us: int
    ride_id: str = ""

    def __post_init__(self):
        x = np.array(self.input, dtype=np.float64).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "input", x)
        object.__setattr__(self, "label_power_w", float(self.label_power_w))
        object.__setattr__(self, "start_us", int(self.start_us))
        object.__setattr__(self, "end_us", int(self.end_us))
        object.__setattr__(self, "ride_id", str(self.ride_id))

    def __eq__(self, other):
        if not isinstance(other, LabeledStroke):
            return NotImplemented
        return (
            self.ride_id == other.ride_id
            and self.start_us == other.start_us
            and self.end_us == other.end_us
            and self.label_power_w == other.label_power_w
            and np.array_equal(self.input, other.input)
        )

    @property
    def window(self) -> Tuple[int, int]:
        return self.start_us, self.end_us


class Alignment(NamedTuple):
    strokes: List[LabeledStroke]
    dropped: int


def window_labels(starts, ends, ref_ts, ref_power, tolerance_us: int = ALIGN_TOLERANCE_US) -> np.ndarray:
    """Time-weighted mean of the held reference over each window; NaN where uncovered.

    The reference is a step function: each tick's value holds until the
    next tick, and the first value also covers the ``tolerance_us`` before
    it. A window is uncovered if it reaches more than ``tolerance_us``
    outside the tick span or has no tick within ``tolerance_us`` of it.
    """
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    t = np.asarray(ref_ts, dtype=np.float64)
    v = np.asarray(ref_power, dtype=np.float64)
    if t.size == 0:
        return np.full(starts.shape, np.nan)
    area = np.concatenate([[0.0], np.cumsum(v[:-1] * np.diff(t))])
    # Index of the value holding at each edge; before the first tick that is 0.
    ks = np.clip(np.searchsorted(t, starts, side="right") - 1, 0, t.size - 1)
    ke = np.clip(np.searchsorted(t, ends, side="right") - 1, 0, t.size - 1)
    # Split at the first and last tick inside the window rather than
    # differencing two long running integrals, which cancels badly.
    nxt = t[np.minimum(ks + 1, t.size - 1)]
    head = v[ks] * (nxt - starts)
    middle = area[ke] - area[np.minimum(ks + 1, t.size - 1)]
    tail = v[ke] * (ends - t[ke])
    with np.errstate(invalid="ignore", divide="ignore"):
        labels = np.where(ks == ke, v[ks], (head + middle + tail) / (ends - starts))
    lo_tick = np.searchsorted(t, starts - tolerance_us, side="left")
    has_tick = (lo_tick < t.size) & (t[np.minimum(lo_tick, t.size - 1)] <= ends + tolerance_us)
    covered = (starts >= t[0] - tolerance_us) & (ends <= t[-1] + tolerance_us) & has_tick & (ends > starts)
    return np.where(covered, labels, np.nan)


def align_streams(
    strokes: Sequence,
    reference: Sequence[ReferencePowerSample],
    ride_id: str = "",
    tolerance_us: int = ALIGN_TOLERANCE_US,
    clock_offset_us: int = 0,
) -> Alignment:
    """Label processed strokes with the reference power over their windows.

    ``strokes`` are :class:`~pedalwatt.pipeline.ProcessedStroke` items (or
    anything with ``segment`` and ``input``). ``clock_offset_us`` is added
    to reference timestamps before matching.
    """
    ref_ts = np.array([r[0] for r in reference], dtype=np.int64) + int(clock_offset_us)
    ref_pw = np.array([r[1] for r in reference], dtype=np.float64)
    if len(strokes) == 0:
        return Alignment([], 0)
    starts = np.array([s.segment.start_us for s in strokes], dtype=np.int64)
    ends = np.array([s.segment.end_us for s in strokes], dtype=np.int64)
    span = max(int(ends.max() - starts.min()), 1)
    if ref_ts.size == 0:
        raise AlignmentError("reference stream is empty", 0.0)
    overlap = min(ends.max(), ref_ts[-1] + tolerance_us) - max(starts.min(), ref_ts[0] - tolerance_us)
    if overlap <= 0:
        raise AlignmentError("sensor and reference streams do not overlap", 0.0)
    labels = window_labels(starts, ends, ref_ts, ref_pw, tolerance_us)
    out = [
        LabeledStroke(s.input, lab, st, en, ride_id)
        for s, lab, st, en in zip(strokes, labels, starts, ends)
        if not math.isnan(lab)
    ]
    return Alignment(out, len(strokes) - len(out))


def label_ride(
    stream: SensorStream,
    reference: Sequence[ReferencePowerSample],
    ride_id: str = "",
    config: PipelineConfig = PipelineConfig(),
) -> Alignment:
    """Segment, validate and featurise a sensor stream, then label it."""
    return align_streams(process_stream(stream, config), reference, ride_id)


@dataclass(frozen=True)
class BalanceReport:
    edges: np.ndarray
    counts: np.ndarray
    flagged: np.ndarray

    @property
    def min_occupancy(self) -> int:
        return int(self.counts.min()) if self.counts.size else 0

    @property
    def max_occupancy(self) -> int:
        return int(self.counts.max()) if self.counts.size else 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_lo,bin_hi,count,flag\n")
        for lo, hi, c, f in zip(self.edges[:-1], self.edges[1:], self.counts, self.flagged):
            buf.write(f"{lo:g},{hi:g},{int(c)},{int(bool(f))}\n")
        return buf.getvalue()

    def summary(self) -> str:
        total = int(self.counts.sum())
        lines = [
            f"strokes: {total}",
            f"bins: {self.counts.size} x {self.edges[1] - self.edges[0]:g} W over "
            f"[{self.edges[0]:g}, {self.edges[-1]:g}) W",
            f"occupancy: min {self.min_occupancy}, max {self.max_occupancy}, "
            f"median {float(np.median(self.counts)) if self.counts.size else 0:g}",
        ]
        flagged = [f"{self.edges[i]:g}-{self.edges[i + 1]:g} W" for i in np.flatnonzero(self.flagged)]
        lines.append("under-filled: " + (", ".join(flagged) if flagged else "none"))
        return "\n".join(lines) + "\n"


def balance_histogram(dataset, bin_width_w: float = 20.0, range_w: Tuple[float, float] = (0.0, 300.0)) -> BalanceReport:
    """Histogram of label power; bins under a quarter of the median count are flagged.

    Labels outside ``range_w`` are counted in the nearest edge bin so the
    counts always add up to the dataset size.
    """
    if not bin_width_w > 0:
        raise ConfigurationError("bin width must be positive")
    lo, hi = float(range_w[0]), float(range_w[1])
    if not hi > lo:
        raise ConfigurationError("histogram range must be increasing")
    n_bins = int(math.ceil((hi - lo) / bin_width_w - 1e-9))
    edges = lo + bin_width_w * np.arange(n_bins + 1)
    labels = np.array([getattr(s, "label_power_w", s) for s in dataset], dtype=np.float64)
    idx = np.clip(np.floor((labels - lo) / bin_width_w).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)[:n_bins]
    median = float(np.median(counts))
    flagged = counts < 0.25 * median
    return BalanceReport(edges, counts, flagged)


# --- CSV formats -----------------------------------------------------------


def _open_rows(path, header: Sequence[str]):
    """Yield ``(line_number, fields)`` after checking the header line."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        first = next(reader)
    except StopIteration:
        raise ParseError("missing header", line=1, path=path) from None
    if [h.strip() for h in first] != list(header):
        raise ParseError(f"expected header {','.join(header)}", line=1, path=path)
    for row in reader:
        if not row:
            continue
        yield reader.line_num, row


def _num(text: str, kind, line: int, path, name: str):
    try:
        value = kind(text)
    except ValueError:
        raise ParseError(f"bad {name} value {text!r}", line=line, path=path) from None
    if kind is float and not math.isfinite(value):
        raise ParseError(f"non-finite {name}", line=line, path=path)
    return value


def _read_table(path, header, kinds, monotonic: Optional[int] = 0):
    rows = []
    last = None
    for line, row in _open_rows(path, header):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line, path=path)
        vals = [_num(t, k, line, path, h) for t, k, h in zip(row, kinds, header)]
        if monotonic is not None:
            ts = vals[monotonic]
            if last is not None and ts <= last:
                raise ParseError(f"{header[monotonic]} {ts} not after {last}", line=line, path=path)
            last = ts
        rows.append(vals)
    return rows


def write_sensor_csv(path, stream: SensorStream) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SENSOR_HEADER) + "\n")
        for t, row in zip(stream.timestamp_us.tolist(), stream.values.tolist()):
            fh.write(f"{t},{row[0]!r},{row[1]!r},{row[2]!r},{row[3]!r}\n")


def read_sensor_csv(path) -> SensorStream:
    rows = _read_table(path, SENSOR_HEADER, (int, float, float, float, float))
    if not rows:
        return SensorStream(np.zeros(0, np.int64), np.zeros((0, 4)))
    return SensorStream(np.array([r[0] for r in rows], np.int64), np.array([r[1:] for r in rows], np.float64))


def write_reference_csv(path, reference: Iterable[ReferencePowerSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(REFERENCE_HEADER) + "\n")
        for t, p in reference:
            fh.write(f"{int(t)},{float(p)!r}\n")


def read_reference_csv(path) -> List[ReferencePowerSample]:
    rows = _read_table(path, REFERENCE_HEADER, (int, float))
    for i, (_, p) in enumerate(rows):
        if p < 0:
            raise ParseError("negative power", line=i + 2, path=path)
    return [ReferencePowerSample(int(t), float(p)) for t, p in rows]


def write_truth_csv(path, truth: Iterable[GroundTruthStroke]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TRUTH_HEADER) + "\n")
        for s in truth:
            fh.write(f"{int(s.start_us)},{int(s.end_us)},{float(s.true_power_w)!r},{float(s.true_cadence_rpm)!r}\n")


def read_truth_csv(path) -> List[GroundTruthStroke]:
    rows = _read_table(path, TRUTH_HEADER, (int, int, float, float))
    return [GroundTruthStroke(*r) for r in rows]


SENSOR_FILE = "sensor.csv"
REFERENCE_FILE = "reference.csv"
TRUTH_FILE = "truth.csv"


class RideFiles(NamedTuple):
    stream: SensorStream
    reference: List[ReferencePowerSample]
    truth: Optional[List[GroundTruthStroke]]


def write_streams(directory, stream, reference, truth=None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_sensor_csv(d / SENSOR_FILE, stream)
    write_reference_csv(d / REFERENCE_FILE, reference)
    if truth is not None:
        write_truth_csv(d / TRUTH_FILE, truth)


def read_streams(directory) -> RideFiles:
    """Read ``sensor.csv``, ``reference.csv`` and, if present, ``truth.csv``."""
    d = Path(directory)
    for name in (SENSOR_FILE, REFERENCE_FILE):
        if not (d / name).is_file():
            raise ParseError(f"missing {name}", path=d)
    truth = read_truth_csv(d / TRUTH_FILE) if (d / TRUTH_FILE).is_file() else None
    return RideFiles(read_sensor_csv(d / SENSOR_FILE), read_reference_csv(d / REFERENCE_FILE), truth)


def dataset_header(input_dim: int) -> List[str]:
    return list(DATASET_META) + [f"x{i}" for i in range(input_dim)]


def sort_dataset(dataset: Iterable[LabeledStroke]) -> List[LabeledStroke]:
    return sorted(dataset, key=lambda s: (s.ride_id, s.start_us))


def write_dataset(path, dataset: Sequence[LabeledStroke], input_dim: Optional[int] = None) -> None:
    if input_dim is None:
        input_dim = dataset[0].input.shape[0] if len(dataset) else 131
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(dataset_header(input_dim)) + "\n")
        for s in dataset:
            if s.input.shape[0] != input_dim:
                raise ConfigurationError("strokes of mixed input dimension")
            xs = ",".join(repr(float(v)) for v in s.input)
            fh.write(f"{s.ride_id},{s.start_us},{s.end_us},{float(s.label_power_w)!r},{xs}\n")


def read_dataset(path) -> List[LabeledStroke]:
    text = Path(path).read_text(encoding="utf-8")
    first = text.split("\n", 1)[0].strip().split(",")
    if first[: len(DATASET_META)] != list(DATASET_META):
        raise ParseError("missing dataset header", line=1, path=path)
    input_dim = len(first) - len(DATASET_META)
    header = dataset_header(input_dim)
    out = []
    for line, row in _open_rows(path, header):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line, path=path)
        start = _num(row[1], int, line, path, "start_us")
        end = _num(row[2], int, line, path, "end_us")
        label = _num(row[3], float, line, path, "label_power_w")
        if end <= start:
            raise ParseError("window end not after start", line=line, path=path)
        if label < 0:
            raise ParseError("negative label", line=line, path=path)
        xs = [_num(t, float, line, path, f"x{i}") for i, t in enumerate(row[4:])]
        out.append(LabeledStroke(np.array(xs), label, start, end, row[0]))
    return out


def dataset_arrays(dataset: Sequence[LabeledStroke]) -> Tuple[np.ndarray, np.ndarray]:
    if len(dataset) == 0:
        return np.zeros((0, 0)), np.zeros(0)
    return np.stack([s.input for s in dataset]), np.array([s.label_power_w for s in dataset])

"""Per-stroke latency benchmark on the host.

Each stage is timed in isolation over every stroke, after a warm-up pass
whose timings are thrown away. The cost of timing an empty call is measured
the same way and subtracted, so a stage that does nothing reads as zero and
is reported as below the timer resolution.
"""

from __future__ import annotations

import csv
import io
import platform
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import BenchmarkError
from .features import StrokeSegment, featurize, validate_candidate
from .model import DenseModel, predict
from .pipeline import PipelineConfig, segment_stream
from .quant import QuantizedModel, dequantize_output, quantize_input, run_integer
from .stream import SensorStream

MIN_STROKES = 1000

# Row order and reference figures of the MCU latency table (84 MHz), in microseconds.
STAGES = ("pre-processing", "post-processing", "serialization", "inference")
MCU_REFERENCE_US = {
    "pre-processing": 824.0,
    "post-processing": 3.1785,
    "serialization": 169.0,
    "inference": 3333.0,
}
MCU_TOTAL_US = 4330.0
STAGE_NOTES = {
    "post-processing": "output dequantisation + record assembly",
    "serialization": "output record formatting (no radio)",
}


@dataclass(frozen=True)
class StageTiming:
    name: str
    median_us: float
    p95_us: float
    below_resolution: bool


@dataclass(frozen=True)
class LatencyReport:
    stages: Tuple[StageTiming, ...]
    end_to_end_median_us: float
    end_to_end_p95_us: float
    n_strokes: int
    resolution_us: float
    model_kind: str
    host: str

    @property
    def stage_total_us(self) -> float:
        return float(sum(s.median_us for s in self.stages))

    def stage(self, name: str) -> StageTiming:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "median_us", "p95_us", "below_resolution", "mcu_reference_us"])
        for s in self.stages:
            w.writerow([s.name, f"{s.median_us:.3f}", f"{s.p95_us:.3f}", int(s.below_resolution), MCU_REFERENCE_US[s.name]])
        w.writerow(["total (sum of stage medians)", f"{self.stage_total_us:.3f}", "", "", MCU_TOTAL_US])
        w.writerow(["end-to-end", f"{self.end_to_end_median_us:.3f}", f"{self.end_to_end_p95_us:.3f}", "", ""])
        w.writerow(["# strokes", self.n_strokes, "", "", ""])
        w.writerow(["# resolution_us", f"{self.resolution_us:.4f}", "", "", ""])
        w.writerow(["# model", self.model_kind, "", "", ""])
        w.writerow(["# host", self.host, "", "", ""])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LatencyReport":
        rows = list(csv.reader(io.StringIO(text)))
        stages, meta = [], {}
        e2e = (0.0, 0.0)
        for row in rows[1:]:
            if row[0] in STAGES:
                stages.append(StageTiming(row[0], float(row[1]), float(row[2]), bool(int(row[3]))))
            elif row[0] == "end-to-end":
                e2e = (float(row[1]), float(row[2]))
            elif row[0].startswith("# "):
                meta[row[0][2:]] = row[1]
        if len(stages) != len(STAGES):
            raise BenchmarkError("latency table is missing stage rows")
        return cls(
            tuple(stages), e2e[0], e2e[1], int(meta.get("strokes", 0)),
            float(meta.get("resolution_us", 0.0)), meta.get("model", ""), meta.get("host", ""),
        )

    def render(self) -> str:
        """Four-row table beside the MCU figures, which are context only."""
        lines = [
            f"Per-stroke latency, host-scale ({self.host})",
            f"model: {self.model_kind}; {self.n_strokes} strokes; timer floor {self.resolution_us:.3f} us",
            "",
            f"{'stage':<30}{'host median':>14}{'host p95':>14}{'MCU @ 84 MHz*':>16}",
        ]
        for s in self.stages:
            med = f"< {self.resolution_us:.3f} us" if s.below_resolution else f"{s.median_us:.3f} us"
            p95 = f"{s.p95_us:.3f} us"
            lines.append(f"{s.name:<30}{med:>14}{p95:>14}{_fmt_ref(MCU_REFERENCE_US[s.name]):>16}")
        lines.append(f"{'total (sum of stage medians)':<30}{self.stage_total_us:>11.3f} us{'':>14}{_fmt_ref(MCU_TOTAL_US):>16}")
        lines.append(f"{'end-to-end (measured)':<30}{self.end_to_end_median_us:>11.3f} us{self.end_to_end_p95_us:>11.3f} us")
        lines.append("")
        lines.append("* microcontroller figures are published reference values, not reproduction targets.")
        for name in STAGES:
            if name in STAGE_NOTES:
                lines.append(f"  {name}: {STAGE_NOTES[name]}")
        return "\n".join(lines) + "\n"


def _fmt_ref(us: float) -> str:
    return f"{us / 1000:.4g} ms" if us >= 100 else f"{us:.5g} us"


def host_description() -> str:
    return f"{platform.machine() or 'unknown'} {platform.system()} / Python {platform.python_version()}"


def _time_calls(fn: Callable, args: Sequence, warmup: int) -> np.ndarray:
    clock = time.perf_counter_ns
    for a in args[:warmup]:
        fn(a)
    out = np.empty(len(args), dtype=np.int64)
    for k, a in enumerate(args):
        t0 = clock()
        fn(a)
        out[k] = clock() - t0
    return out


def _noop(_):
    return None


def _stage_fns(model, bounds):
    """Inference, post-processing and record-formatting callables for one stroke."""
    if isinstance(model, QuantizedModel):
        def infer(x):
            return run_integer(model, quantize_input(model, x[np.newaxis, :]))

        def post(item):
            seg, yq = item
            return seg.start_us, seg.end_us, float(dequantize_output(model, yq)[0, 0])

        return infer, post, "int8"
    if isinstance(model, DenseModel):
        def infer(x):
            return predict(model, x[np.newaxis, :])

        def post(item):
            seg, y = item
            return seg.start_us, seg.end_us, float(y[0])

        return infer, post, "float32"
    if callable(model):
        def post(item):
            seg, y = item
            return seg.start_us, seg.end_us, float(y or 0.0)

        return model, post, getattr(model, "__name__", "callable")
    raise BenchmarkError(f"cannot benchmark {type(model).__name__}")


def _serialize(record) -> str:
    return f"{record[0]},{record[1]},{record[2]:.3f}\n"


def bench_latency(
    model: Union[DenseModel, QuantizedModel, Callable],
    stream: Union[SensorStream, Sequence[StrokeSegment]],
    config: Optional[PipelineConfig] = None,
    warmup: int = 50,
    min_strokes: int = MIN_STROKES,
) -> LatencyReport:
    """Time pre-processing, inference, post-processing and serialization per stroke.

    Args:
        model: float or int8 model, or any callable taking one input vector
            (useful as a stub).
        stream: a sensor stream to segment, or already segmented strokes.
        config: pipeline settings used for segmenting and featurizing.
        warmup: leading strokes run once before timing starts.
        min_strokes: fewest strokes accepted for a meaningful distribution.

    Raises:
        BenchmarkError: if fewer than ``min_strokes`` strokes are available.
    """
    if config is None:
        bounds = getattr(model, "bounds", None)
        config = PipelineConfig(bounds=bounds) if bounds is not None else PipelineConfig()
    if isinstance(stream, SensorStream):
        segments = list(segment_stream(stream, config))
    else:
        segments = list(stream)
    segments = [s for s in segments if validate_candidate(s, config.criteria)]
    if len(segments) < min_strokes:
        raise BenchmarkError(f"need at least {min_strokes} strokes, got {len(segments)}")

    infer, post, kind = _stage_fns(model, config.bounds)

    def pre(seg):
        validate_candidate(seg, config.criteria)
        return featurize(seg, config.bounds, config.target_len)

    inputs = [pre(s) for s in segments]
    outputs = [infer(x) for x in inputs]
    items = list(zip(segments, outputs))
    records = [post(it) for it in items]

    def end_to_end(seg):
        validate_candidate(seg, config.criteria)
        return _serialize(post((seg, infer(featurize(seg, config.bounds, config.target_len)))))

    base = _time_calls(_noop, segments, warmup)
    base_med = float(np.median(base))
    # Floor: the clock tick or the jitter of an empty call, whichever is larger.
    tick_ns = time.get_clock_info("perf_counter").resolution * 1e9
    floor_ns = max(tick_ns, float(np.percentile(base, 95)) - base_med, 1.0)

    raw = {
        "pre-processing": _time_calls(pre, segments, warmup),
        "post-processing": _time_calls(post, items, warmup),
        "serialization": _time_calls(_serialize, records, warmup),
        "inference": _time_calls(infer, inputs, warmup),
    }
    stages = []
    for name in STAGES:
        net = raw[name] - base_med
        med = max(float(np.median(net)), 0.0)
        p95 = max(float(np.percentile(net, 95)), 0.0)
        stages.append(StageTiming(name, med / 1e3, p95 / 1e3, med < floor_ns))
    e2e = _time_calls(end_to_end, segments, warmup) - base_med
    return LatencyReport(
        stages=tuple(stages),
        end_to_end_median_us=max(float(np.median(e2e)), 0.0) / 1e3,
        end_to_end_p95_us=max(float(np.percentile(e2e, 95)), 0.0) / 1e3,
        n_strokes=len(segments),
        resolution_us=floor_ns / 1e3,
        model_kind=kind,
        host=host_description(),
    )

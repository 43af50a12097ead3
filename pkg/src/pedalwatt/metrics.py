"""Accuracy metrics and the evaluation report."""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError


def _pair(predictions, truths) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ShapeError(f"{p.size} predictions vs {t.size} truths")
    if p.size == 0:
        raise ShapeError("need at least one prediction")
    return p, t


def mae(predictions, truths) -> float:
    p, t = _pair(predictions, truths)
    return float(np.mean(np.abs(p - t)))


def avg_power_diff(predictions, truths) -> float:
    """Absolute difference between mean predicted and mean true power."""
    p, t = _pair(predictions, truths)
    return float(abs(p.mean() - t.mean()))


@dataclass
class EvalReport:
    n_samples: int
    mae_w: float
    avg_power_diff_w: float
    mean_truth_w: float
    mean_prediction_w: float
    duration_s: float
    band_lo_w: List[float] = field(default_factory=list)
    band_count: List[int] = field(default_factory=list)
    band_mae_w: List[Optional[float]] = field(default_factory=list)
    label: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def bands_csv(self, bin_width_w: float) -> str:
        buf = io.StringIO()
        buf.write("bin_lo,bin_hi,count,mae_w\n")
        for lo, n, m in zip(self.band_lo_w, self.band_count, self.band_mae_w):
            buf.write(f"{lo:g},{lo + bin_width_w:g},{n},{'' if m is None else format(m, '.3f')}\n")
        return buf.getvalue()

    def summary(self) -> str:
        pct = 100.0 * self.mae_w / self.mean_truth_w if self.mean_truth_w > 0 else float("nan")
        lines = [
            f"samples:               {self.n_samples}",
            f"riding time:           {self.duration_s / 60.0:.1f} min",
            f"MAE:                   {self.mae_w:.3f} W ({pct:.1f} % of mean power)",
            f"average power diff:    {self.avg_power_diff_w:.3f} W",
            f"mean power (truth):    {self.mean_truth_w:.2f} W",
            f"mean power (estimate): {self.mean_prediction_w:.2f} W",
            "per-band MAE:",
        ]
        width = self.band_lo_w[1] - self.band_lo_w[0] if len(self.band_lo_w) > 1 else 0.0
        for lo, n, m in zip(self.band_lo_w, self.band_count, self.band_mae_w):
            if n:
                lines.append(f"  {lo:5.0f}-{lo + width:<5.0f} W  n={n:<6d} MAE {m:.2f} W")
        return "\n".join(lines) + "\n"


def evaluate(
    predictions,
    truths,
    windows: Optional[Sequence[Tuple[int, int]]] = None,
    bin_width_w: float = 20.0,
    range_w: Tuple[float, float] = (0.0, 300.0),
    label: str = "",
) -> EvalReport:
    """Overall and per-band accuracy; bands are set by the true power."""
    p, t = _pair(predictions, truths)
    n_bins = int(math.ceil((range_w[1] - range_w[0]) / bin_width_w - 1e-9))
    idx = np.clip(np.floor((t - range_w[0]) / bin_width_w).astype(np.int64), 0, n_bins - 1)
    err = np.abs(p - t)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=err, minlength=n_bins)
    band_mae = [float(s / c) if c else None for s, c in zip(sums, counts)]
    duration = 0.0
    if windows is not None and len(windows):
        w = np.asarray(windows, dtype=np.int64)
        duration = float(w[:, 1].max() - w[:, 0].min()) * 1e-6
    return EvalReport(
        n_samples=int(p.size),
        mae_w=mae(p, t),
        avg_power_diff_w=avg_power_diff(p, t),
        mean_truth_w=float(t.mean()),
        mean_prediction_w=float(p.mean()),
        duration_s=duration,
        band_lo_w=[float(range_w[0] + k * bin_width_w) for k in range(n_bins)],
        band_count=[int(c) for c in counts],
        band_mae_w=band_mae,
        label=label,
    )

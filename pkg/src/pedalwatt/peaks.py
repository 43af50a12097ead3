"""Local-maximum detection with prominence and spacing constraints.

Every decision is local: whether index ``i`` is a peak depends only on the
samples within ``half_window + min_distance`` of it.  That is what lets the
streaming segmenter commit peaks as soon as enough look-ahead has arrived
and still agree exactly with a batch pass over the whole signal.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


def _is_local_max(x: np.ndarray, i: int, half_window: int | None) -> bool:
    # Rising edge on the left; on a plateau the leftmost sample is the peak and
    # the plateau must fall off inside the window.
    if not x[i - 1] < x[i]:
        return False
    if x[i + 1] < x[i]:
        return True
    if x[i + 1] > x[i]:
        return False
    stop = x.shape[0] if half_window is None else min(x.shape[0], i + half_window + 1)
    j = i + 1
    while j < stop and x[j] == x[i]:
        j += 1
    return j < stop and x[j] < x[i]


def _prominence(x: np.ndarray, i: int, half_window: int | None) -> float:
    n = x.shape[0]
    lo = 0 if half_window is None else max(0, i - half_window)
    hi = n if half_window is None else min(n, i + half_window + 1)
    h = x[i]

    left = x[lo:i][::-1]
    higher = np.flatnonzero(left > h)
    left_min = left[: higher[0]].min() if higher.size else left.min()

    right = x[i + 1 : hi]
    higher = np.flatnonzero(right > h)
    right_min = right[: higher[0]].min() if higher.size else right.min()
    return float(h - max(left_min, right_min))


def peak_candidates(
    x: np.ndarray,
    min_prominence: float,
    lo: int,
    hi: int,
    half_window: int | None = None,
) -> np.ndarray:
    """Indices in ``[lo, hi]`` that are local maxima with enough prominence.

    ``x`` may be a slice of a longer signal; the caller is responsible for
    supplying ``half_window`` samples of context on both sides where they
    exist.
    """
    n = x.shape[0]
    lo = max(lo, 1)
    hi = min(hi, n - 2)
    if hi < lo:
        return np.zeros(0, dtype=np.int64)
    seg = x[lo - 1 : hi + 2]
    # Vectorised pre-screen: rising into i and not rising out of it.
    rough = np.flatnonzero((seg[1:-1] > seg[:-2]) & (seg[1:-1] >= seg[2:])) + lo
    out = [
        i
        for i in rough
        if _is_local_max(x, i, half_window) and _prominence(x, i, half_window) >= min_prominence
    ]
    return np.asarray(out, dtype=np.int64)


def suppress_close(x: np.ndarray, candidates: np.ndarray, min_distance: int, lo: int, hi: int) -> np.ndarray:
    """Drop candidates in ``[lo, hi]`` beaten by a neighbour closer than ``min_distance``.

    A neighbour beats ``i`` if it is higher, or equally high and earlier.
    ``candidates`` must cover ``[lo - min_distance + 1, hi + min_distance - 1]``.
    """
    keep = []
    cands = np.asarray(candidates, dtype=np.int64)
    for k, i in enumerate(cands):
        if i < lo or i > hi:
            continue
        beaten = False
        j = k - 1
        while j >= 0 and i - cands[j] < min_distance:
            if x[cands[j]] >= x[i]:
                beaten = True
                break
            j -= 1
        if not beaten:
            j = k + 1
            while j < cands.shape[0] and cands[j] - i < min_distance:
                if x[cands[j]] > x[i]:
                    beaten = True
                    break
                j += 1
        if not beaten:
            keep.append(i)
    return np.asarray(keep, dtype=np.int64)


def detect_peaks(
    force,
    min_prominence_n: float,
    min_distance_samples: int,
    half_window: int | None = None,
) -> np.ndarray:
    """Find stroke boundary maxima in a force signal.

    Args:
        force: 1-D signal.
        min_prominence_n: minimum drop from the peak to the higher of its two
            surrounding bases.
        min_distance_samples: minimum index gap between returned peaks. When
            two peaks are closer, the higher one wins, ties going to the
            earlier index.
        half_window: if given, bases are searched only within this many
            samples of the peak (the ``wlen // 2`` of ``scipy.signal``).

    Returns:
        Strictly increasing integer indices.
    """
    x = np.asarray(force, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigurationError("force must be one-dimensional")
    if min_distance_samples < 1:
        raise ConfigurationError("min_distance_samples must be >= 1")
    if not min_prominence_n >= 0:
        raise ConfigurationError("min_prominence_n must be >= 0")
    if x.shape[0] < 3:
        return np.zeros(0, dtype=np.int64)
    cands = peak_candidates(x, min_prominence_n, 1, x.shape[0] - 2, half_window)
    return suppress_close(x, cands, int(min_distance_samples), 0, x.shape[0] - 1)


def refine_peak(x: np.ndarray, i: int) -> float:
    """Sub-sample offset of a peak from a parabola through its neighbours, in [-0.5, 0.5]."""
    a, b, c = float(x[i - 1]), float(x[i]), float(x[i + 1])
    denom = a - 2.0 * b + c
    if denom >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))

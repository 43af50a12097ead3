import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.signal import find_peaks

from oracles import brute_peaks
from pedalwatt.errors import ConfigurationError
from pedalwatt.peaks import detect_peaks, refine_peak

signals = arrays(
    np.float64,
    st.integers(3, 120),
    elements=st.integers(0, 12).map(float),  # small alphabet -> many plateaus and ties
)
# Plateau peaks are reported at their first sample here but at their middle by
# scipy, so scipy comparisons use signals with no repeated values.
smooth = st.lists(st.floats(0, 100, allow_nan=False), min_size=3, max_size=150, unique=True).map(np.array)


def test_monotone_sequence_has_no_peaks():
    assert list(detect_peaks(np.arange(50.0), 1.0, 1)) == []


def test_symmetric_twin_peaks():
    assert list(detect_peaks([0, 5, 0, 5, 0], 1.0, 1)) == [1, 3]


def test_flat_signal_has_no_peaks():
    assert list(detect_peaks(np.full(200, 300.0), 20.0, 25)) == []


def test_bad_parameters_rejected():
    with pytest.raises(ConfigurationError):
        detect_peaks([0, 1, 0], 1.0, 0)
    with pytest.raises(ConfigurationError):
        detect_peaks([0, 1, 0], -1.0, 1)


@given(signals, st.sampled_from([0.5, 1.0, 3.0, 7.0]))
def test_unbounded_window_matches_brute_force(x, prom):
    got = detect_peaks(x, prom, 1)
    assert list(got) == brute_peaks(x.tolist(), prom)


@given(smooth, st.sampled_from([0.5, 1.0, 3.0, 20.0]))
def test_matches_scipy_without_spacing(x, prom):
    ref, _ = find_peaks(x, prominence=prom)
    assert list(detect_peaks(x, prom, 1)) == list(ref)


@given(smooth, st.sampled_from([0.5, 2.0, 20.0]), st.integers(3, 40))
def test_bounded_window_matches_scipy_wlen(x, prom, half):
    # scipy's wlen covers half samples on each side when wlen = 2 * half + 1.
    ref, _ = find_peaks(x, prominence=prom, wlen=2 * half + 1)
    assert list(detect_peaks(x, prom, 1, half_window=half)) == list(ref)


@given(signals, st.sampled_from([0.5, 2.0]), st.integers(1, 30))
def test_output_sorted_and_spaced(x, prom, dist):
    p = np.asarray(detect_peaks(x, prom, dist))
    assert np.all(np.diff(p) >= dist)


def test_spaced_peaks_agree_with_scipy_distance():
    rng = np.random.default_rng(3)
    t = np.arange(3000)
    x = 300 + 200 * np.sin(2 * np.pi * t / 41.0) + rng.normal(0, 3, t.size)
    ref, _ = find_peaks(x, prominence=20, distance=25)
    assert list(detect_peaks(x, 20.0, 25)) == list(ref)


@given(st.floats(-0.45, 0.45), st.floats(0.5, 5.0))
def test_refine_recovers_parabola_vertex(offset, curvature):
    i = 5
    k = np.arange(11.0)
    x = 100.0 - curvature * (k - (i + offset)) ** 2
    assert refine_peak(x, i) == pytest.approx(offset, abs=1e-9)


def test_plateau_reported_at_first_sample():
    assert list(detect_peaks([0, 1, 3, 3, 3, 1, 0], 1.0, 1)) == [2]


def test_unterminated_plateau_is_not_a_peak():
    assert list(detect_peaks([0, 1, 3, 3, 3], 1.0, 1)) == []


def test_refine_flat_top_is_zero():
    assert refine_peak(np.array([1.0, 2.0, 2.0, 2.0, 1.0]), 2) == 0.0

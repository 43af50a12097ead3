import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from helpers import random_dense, random_inputs, random_qmodel
from oracles import fixed_point, half_away, int_forward
from fractions import Fraction
from pedalwatt.errors import CalibrationError, ShapeError
from pedalwatt.model import DEFAULT_DIMS, DenseModel, predict
from pedalwatt.quant import (
    QuantLayer,
    activation_params,
    dequantize_weights,
    forward_i8,
    layer_codes,
    predict_i8,
    quantize_input,
    quantize_model,
    quantize_multiplier,
    quantize_weights,
    round_half_away,
    run_integer,
)


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(round_half_away([0.5, 1.5, 2.5, -0.5, -2.5, 0.49]), [1, 2, 3, -1, -3, 0])


def test_all_zero_weights_get_unit_scale():
    q, s = quantize_weights(np.zeros((3, 4)))
    assert s == 1.0 and not q.any()


def test_half_weight_rounds_to_64():
    q, s = quantize_weights(np.array([0.5, 1.0, -1.0]))
    assert s == np.float32(1 / 127)
    assert q.tolist() == [64, 127, -127]


@given(arrays(np.float32, st.integers(1, 200), elements=st.floats(-10, 10, width=32)))
def test_weight_error_within_half_step(w):
    q, s = quantize_weights(w)
    assert q.min() >= -127 and q.max() <= 127
    err = np.abs(q.astype(np.float64) * s - w.astype(np.float64))
    assert np.all(err <= s / 2 * (1 + 1e-6))


def test_activation_params_cover_zero():
    s, zp = activation_params(2.0, 5.0)
    assert zp == 0 and s == np.float32(5 / 255)
    s, zp = activation_params(-1.0, 1.0)
    # The zero-point is derived from the stored float32 scale, not from 2/255 exactly.
    assert zp == half_away(Fraction(1.0 / float(s))) == 127
    s, zp = activation_params(-3.0, -1.0)
    assert zp == 255
    assert activation_params(0.0, 0.0) == (1.0, 0)


@given(st.floats(1e-12, 1e6))
def test_multiplier_matches_oracle(m):
    assert quantize_multiplier(m) == fixed_point(m)


def test_quantized_bias_passthrough():
    m = DenseModel.zeros()
    bs = list(m.biases)
    bs[-1] = np.array([150.0])
    m = DenseModel(m.layer_dims, m.weights, tuple(bs))
    calib = np.random.default_rng(0).random((50, 131))
    q = quantize_model(m, calib)
    for x in calib[:5]:
        assert abs(forward_i8(q, x) - 150.0) <= q.output_scale


def test_empty_calibration_rejected():
    with pytest.raises(CalibrationError):
        quantize_model(DenseModel.zeros((3, 1)), np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        quantize_model(DenseModel.zeros((3, 1)), np.zeros((4, 5)))


def test_int8_range_enforced():
    with pytest.raises(ShapeError):
        QuantLayer(np.full((1, 1), -128), 1.0, 1.0, 0, np.zeros(1))
    with pytest.raises(ShapeError):
        QuantLayer(np.zeros((1, 1)), 1.0, 1.0, 256, np.zeros(1))


def test_small_net_bit_exact_against_oracle():
    rng = np.random.default_rng(7)
    m = random_dense((4, 3, 1), rng)
    calib = rng.normal(size=(200, 4))
    q = quantize_model(m, calib)
    xs = rng.normal(size=(1000, 4)) * 1.2
    got = predict_i8(q, xs)
    assert got.tolist() == [int_forward(q, x) for x in xs]


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_random_layers_bit_exact(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 4))
    dims = [int(d) for d in rng.integers(1, 12, depth + 1)]
    q = random_qmodel(dims, rng)
    xs = random_inputs(q, rng, 5)
    assert predict_i8(q, xs).tolist() == [int_forward(q, x) for x in xs]


def test_int64_fallback_agrees_with_blas_path():
    rng = np.random.default_rng(3)
    q = random_qmodel([9, 7, 5, 1], rng)
    xq = quantize_input(q, random_inputs(q, rng, 50))
    fast = run_integer(q, xq)
    for layer in q.layers:
        object.__setattr__(layer, "_wt64", None)
    np.testing.assert_array_equal(run_integer(q, xq), fast)


def test_hidden_codes_clamped_at_zero_point():
    rng = np.random.default_rng(4)
    q = random_qmodel([6, 8, 8, 1], rng)
    x = quantize_input(q, random_inputs(q, rng, 200))
    codes = layer_codes(q, x)
    for i in range(len(q.layers) - 1):
        zp = q.layers[i + 1].input_zp
        assert codes[i].min() >= zp
        assert np.any(codes[i] == zp)  # the clamp was actually exercised


def test_dequantized_weights_within_one_step():
    rng = np.random.default_rng(8)
    m = random_dense((20, 10, 1), rng)
    q = quantize_model(m, rng.normal(size=(30, 20)))
    for w, layer in zip(m.weights, q.layers):
        assert np.all(np.abs(dequantize_weights(layer) - w) <= layer.weight_scale)


def test_bias_correction_removes_mean_drift():
    rng = np.random.default_rng(9)
    m = DenseModel.he_uniform(DEFAULT_DIMS, rng)
    calib = rng.random((500, 131))
    ref = predict(m, calib).astype(np.float64)
    plain = quantize_model(m, calib, bias_correction=False)
    fixed = quantize_model(m, calib)
    drift_plain = np.mean(predict_i8(plain, calib) - ref)
    drift_fixed = np.mean(predict_i8(fixed, calib) - ref)
    assert abs(drift_fixed) <= max(abs(drift_plain), float(fixed.output_scale))
    assert abs(drift_fixed) < float(fixed.output_scale)


def test_forward_i8_requires_vector():
    q = random_qmodel([3, 1], np.random.default_rng(0))
    with pytest.raises(ShapeError):
        forward_i8(q, np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        predict_i8(q, np.zeros((2, 4)))


def test_oracle_rounding_helper():
    assert [half_away(Fraction(n, 2)) for n in (-3, -1, 1, 3)] == [-2, -1, 1, 2]

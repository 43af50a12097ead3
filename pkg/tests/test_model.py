import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import random_dense
from oracles import naive_forward
from pedalwatt.errors import ConfigurationError, ShapeError
from pedalwatt.model import DEFAULT_DIMS, REFERENCE_DIMS, DenseModel, forward_f32, neuron_count, param_count, predict


def test_reference_architecture_counts():
    assert param_count(REFERENCE_DIMS) == 70_337
    assert neuron_count(REFERENCE_DIMS) == 546


def test_default_architecture_counts():
    assert param_count([1, 1]) == 2
    assert param_count(DEFAULT_DIMS) == 70_849
    assert DenseModel.zeros().n_params == 70_849


@given(st.lists(st.integers(1, 300), min_size=2, max_size=6))
def test_param_count_matches_allocated_arrays(dims):
    m = DenseModel.zeros(dims)
    assert param_count(dims) == sum(w.size for w in m.weights) + sum(b.size for b in m.biases)


@pytest.mark.parametrize("dims", [[5], [3, 0, 1], [4, -2]])
def test_bad_dims_rejected(dims):
    with pytest.raises(ConfigurationError):
        param_count(dims)


def test_zero_weights_pass_output_bias():
    m = DenseModel.zeros()
    bs = list(m.biases)
    bs[-1] = np.array([150.0])
    m = DenseModel(m.layer_dims, m.weights, tuple(bs))
    x = np.random.default_rng(0).random((10, 131))
    np.testing.assert_array_equal(predict(m, x), np.full(10, 150.0))


def test_one_by_one_layer():
    m = DenseModel((1, 1), (np.array([[2.0]]),), (np.array([1.0]),))
    assert forward_f32(m, np.array([3.0])) == 7.0


def test_random_net_matches_naive_evaluator():
    rng = np.random.default_rng(1)
    m = random_dense((4, 3, 1), rng)
    for x in rng.normal(size=(100, 4)):
        assert forward_f32(m, x) == pytest.approx(naive_forward(m.weights, m.biases, x), abs=1e-6)


def test_full_size_net_matches_naive_evaluator():
    rng = np.random.default_rng(2)
    m = DenseModel.he_uniform(rng=rng)
    for x in rng.random((3, 131)):
        assert forward_f32(m, x) == pytest.approx(naive_forward(m.weights, m.biases, x), rel=1e-4, abs=1e-4)


@given(st.integers(0, 2**32 - 1))
def test_hidden_permutation_leaves_output_unchanged(seed):
    rng = np.random.default_rng(seed)
    m = random_dense((6, 5, 4, 1), rng)
    ws, bs = [w.copy() for w in m.weights], [b.copy() for b in m.biases]
    for layer in range(len(ws) - 1):
        p = rng.permutation(ws[layer].shape[0])
        ws[layer], bs[layer] = ws[layer][p], bs[layer][p]
        ws[layer + 1] = ws[layer + 1][:, p]
    perm = DenseModel(m.layer_dims, tuple(ws), tuple(bs))
    x = rng.normal(size=(20, 6))
    np.testing.assert_allclose(predict(perm, x), predict(m, x), rtol=1e-5, atol=1e-5)


def test_weights_are_read_only():
    m = DenseModel.zeros((2, 2, 1))
    with pytest.raises(ValueError):
        m.weights[0][0, 0] = 1.0


def test_shape_mismatches_raise():
    with pytest.raises(ShapeError):
        DenseModel((2, 1), (np.zeros((2, 2)),), (np.zeros(1),))
    with pytest.raises(ShapeError):
        predict(DenseModel.zeros((3, 1)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        forward_f32(DenseModel.zeros((3, 1)), np.zeros((2, 3)))


def test_he_uniform_is_seeded_and_bounded():
    a = DenseModel.he_uniform(rng=np.random.default_rng(5))
    assert a == DenseModel.he_uniform(rng=np.random.default_rng(5))
    assert a != DenseModel.he_uniform(rng=np.random.default_rng(6))
    for w, fan_in in zip(a.weights, DEFAULT_DIMS[:-1]):
        assert np.abs(w).max() <= np.sqrt(6 / fan_in)

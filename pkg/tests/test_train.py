import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import away_from_kinks, loss_of, numeric_gradients, random_net, relative_error
from pedalwatt.dataset import LabeledStroke
from pedalwatt.errors import ConfigurationError, TrainingError
from pedalwatt.model import predict
from pedalwatt.train import (
    TrainConfig,
    backprop_gradients,
    early_stop_check,
    lr_schedule,
    split_dataset,
    train,
)


@pytest.mark.parametrize("seed", range(24))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in rng.integers(2, 7, int(rng.integers(2, 5)))] + [1]
    ws, bs = random_net(dims, rng)
    x = away_from_kinks(ws, bs, rng, int(rng.integers(1, 9)))
    y = rng.normal(size=x.shape[0])
    loss, gws, gbs = backprop_gradients(ws, bs, x, y)
    assert loss == pytest.approx(loss_of(ws, bs, x, y), rel=1e-12)
    nws, nbs = numeric_gradients(ws, bs, x, y)
    assert relative_error(gws + gbs, nws + nbs) <= 1e-4


def test_five_four_one_net():
    rng = np.random.default_rng(541)
    ws, bs = random_net([5, 4, 1], rng)
    x, y = rng.normal(size=(16, 5)), rng.normal(size=16)
    _, gws, gbs = backprop_gradients(ws, bs, x, y)
    nws, nbs = numeric_gradients(ws, bs, x, y)
    assert relative_error(gws + gbs, nws + nbs) <= 1e-4


def test_zero_network_gradients():
    dims = [4, 3, 1]
    ws = [np.zeros((3, 4)), np.zeros((1, 3))]
    bs = [np.zeros(3), np.zeros(1)]
    x, y = np.zeros((5, 4)), np.zeros(5)
    _, gws, gbs = backprop_gradients(ws, bs, x, y)
    assert all(not g.any() for g in gws + gbs)
    bs[1] = np.array([2.0])
    _, gws, gbs = backprop_gradients(ws, bs, x, y)
    assert all(not g.any() for g in gws + gbs[:1])
    assert gbs[1][0] == pytest.approx(4.0)


def test_doubling_targets_doubles_output_bias_gradient():
    rng = np.random.default_rng(0)
    ws, _ = random_net([6, 5, 1], rng)
    bs = [np.zeros(5), np.zeros(1)]
    x = np.zeros((10, 6))
    y = rng.uniform(50, 250, 10)
    g1 = backprop_gradients(ws, bs, x, y)[2][-1]
    g2 = backprop_gradients(ws, bs, x, 2 * y)[2][-1]
    np.testing.assert_allclose(g2, 2 * g1)


def test_lr_schedule():
    assert lr_schedule(0.01, 0.01, 0) == 0.01
    assert lr_schedule(0.01, 0.01, 100) == pytest.approx(0.005)
    lrs = [lr_schedule(0.01, 0.01, e) for e in range(256)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ConfigurationError):
        lr_schedule(0.01, 0.01, -1)


def test_early_stop_examples():
    assert early_stop_check([1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99], 5) == (True, 1)
    assert early_stop_check([1.0, 0.9, 0.95, 0.96, 0.97, 0.98], 5) == (False, 1)
    assert early_stop_check([2, 2], 1) == (True, 0)
    assert early_stop_check([], 3) == (False, -1)


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=300, unique=True))
def test_strictly_decreasing_never_stops(vals):
    assert not early_stop_check(sorted(vals, reverse=True), 5).stop


def test_split_sizes_and_determinism():
    data = list(range(100))
    tr, va = split_dataset(data, 0.15, seed=3)
    assert (len(tr), len(va)) == (85, 15)
    assert sorted(tr + va) == data
    assert split_dataset(data, 0.15, seed=3) == (tr, va)
    a, _ = split_dataset(list(range(1000)), 0.15, seed=1)
    b, _ = split_dataset(list(range(1000)), 0.15, seed=2)
    assert a != b


def test_split_rejects_tiny_dataset():
    with pytest.raises(ConfigurationError):
        split_dataset(list(range(5)), 0.15)


def _strokes(x, y):
    return [LabeledStroke(xi, float(yi), 1000 * i, 1000 * i + 900, "t") for i, (xi, yi) in enumerate(zip(x, y))]


def test_constant_target_fitted():
    rng = np.random.default_rng(0)
    x = rng.random((600, 131))
    model, _ = train(_strokes(x, np.full(600, 150.0)), TrainConfig(max_epochs=60, seed=1))
    p = predict(model, rng.random((200, 131)))
    assert np.all(np.abs(p - 150.0) <= 1.0)


def test_linear_target_converges():
    rng = np.random.default_rng(1)
    x = rng.random((2000, 3))
    y = 10 * x[:, 0] - 5 * x[:, 1] + 7 * x[:, 2] + 20
    cfg = TrainConfig(max_epochs=50, hidden_dims=(16, 8), batch_size=32, lr0=0.05, label_scale=30.0, patience=50)
    model, hist = train((x, y), cfg)
    assert min(hist.val_loss) < 1.0
    assert hist.train_loss[0] >= 10 * hist.train_loss[hist.best_epoch]


def test_history_matches_schedule_and_best_weights_returned():
    rng = np.random.default_rng(2)
    x = rng.random((400, 5))
    y = 40 * x[:, 0] + 100
    xv = rng.random((80, 5))
    yv = 40 * xv[:, 0] + 100
    cfg = TrainConfig(max_epochs=30, hidden_dims=(8,), batch_size=16, patience=3, seed=4)
    model, hist = train((x, y), cfg, validation=(xv, yv))
    for e, lr in enumerate(hist.lr):
        assert lr == lr_schedule(cfg.lr0, cfg.decay, e)
    val = np.mean((predict(model, xv).astype(np.float64) - yv) ** 2)
    assert val == pytest.approx(hist.val_loss[hist.best_epoch], rel=1e-3)
    assert hist.best_epoch == int(np.argmin(hist.val_loss))


def test_training_is_deterministic():
    rng = np.random.default_rng(3)
    x = rng.random((300, 7))
    y = 100 * x[:, 1] + 50
    cfg = TrainConfig(max_epochs=8, hidden_dims=(6, 4), seed=9)
    m1, h1 = train((x, y), cfg)
    m2, h2 = train((x, y), cfg)
    assert m1 == m2 and h1.to_csv() == h2.to_csv()


def test_divergence_reported_with_epoch():
    rng = np.random.default_rng(4)
    x = rng.random((200, 4)) * 100
    y = rng.uniform(0, 300, 200)
    with pytest.raises(TrainingError, match="epoch 0"):
        train((x, y), TrainConfig(max_epochs=5, lr0=5.0, hidden_dims=(8,), label_scale=1.0))


@pytest.mark.parametrize("kwargs", [dict(batch_size=0), dict(lr0=-1), dict(val_fraction=0.7), dict(decay=-0.1)])
def test_bad_config_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kwargs)

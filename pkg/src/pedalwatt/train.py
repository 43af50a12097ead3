"""Mini-batch SGD training with time-decayed learning rate and early stopping."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError, TrainingError
from .features import NormalizationBounds
from .model import DenseModel

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 256
    batch_size: int = 128
    lr0: float = 0.01
    decay: float = 0.01
    patience: int = 5
    val_fraction: float = 0.15
    seed: int = 0
    hidden_dims: Tuple[int, ...] = (256, 128, 32)
    # Targets are divided by this during optimisation and the factor is
    # folded back into the output layer, so the model still predicts watts.
    label_scale: float = 300.0

    def __post_init__(self):
        for name in ("max_epochs", "batch_size", "lr0", "patience", "label_scale"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.decay < 0:
            raise ConfigurationError("decay must be non-negative")
        if not 0.0 < self.val_fraction < 0.5:
            raise ConfigurationError("val_fraction must lie in (0, 0.5)")


@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    stopped_epoch: int = -1
    best_epoch: int = -1

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("epoch,lr,train_mse,val_mse\n")
        for i, (lr, tr, va) in enumerate(zip(self.lr, self.train_loss, self.val_loss)):
            buf.write(f"{i},{float(lr)!r},{float(tr)!r},{float(va)!r}\n")
        return buf.getvalue()


def lr_schedule(lr0: float, decay: float, epoch: int) -> float:
    if epoch < 0:
        raise ConfigurationError("epoch must be >= 0")
    return lr0 / (1.0 + decay * epoch)


class EarlyStop(NamedTuple):
    stop: bool
    best_epoch: int


def early_stop_check(val_losses: Sequence[float], patience: int) -> EarlyStop:
    """Stop once ``patience`` epochs have passed since the strictly lowest loss."""
    if patience < 1:
        raise ConfigurationError("patience must be >= 1")
    if len(val_losses) == 0:
        return EarlyStop(False, -1)
    best = int(np.argmin(val_losses))  # first occurrence on ties
    return EarlyStop(len(val_losses) - 1 - best >= patience, best)


def split_dataset(dataset: Sequence, val_fraction: float = 0.15, seed: int = 0):
    """Seeded shuffle into disjoint ``(train, val)`` lists, ``|val| = round(n * val_fraction)``."""
    n = len(dataset)
    if n < 10:
        raise ConfigurationError(f"dataset of {n} items is too small to split (need >= 10)")
    if not 0.0 < val_fraction < 1.0:
        raise ConfigurationError("val_fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    return [dataset[i] for i in perm[n_val:]], [dataset[i] for i in perm[:n_val]]


def _forward(weights, biases, x):
    """Pre-activations and activations of every layer; ``acts[0]`` is the input."""
    acts, pre = [x], []
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w.T + b
        pre.append(z)
        acts.append(np.maximum(z, 0.0) if i < last else z)
    return pre, acts


def backprop_gradients(weights, biases, x, y):
    """MSE loss over the batch and its exact gradients.

    Returns ``(loss, grad_weights, grad_biases)``; the ReLU derivative at 0
    is taken as 0.
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=x.dtype).reshape(-1)
    if x.shape[0] == 0:
        raise ConfigurationError("empty batch")
    pre, acts = _forward(weights, biases, x)
    out = acts[-1][:, 0]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite activations")
    resid = out - y
    loss = float(np.mean(resid.astype(np.float64) ** 2))
    delta = (2.0 / x.shape[0]) * resid[:, np.newaxis]
    gws, gbs = [None] * len(weights), [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gws[i] = delta.T @ acts[i]
        gbs[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i]) * (pre[i - 1] > 0)
    return loss, gws, gbs


def _mse(weights, biases, x, y) -> float:
    _, acts = _forward(weights, biases, x)
    return float(np.mean((acts[-1][:, 0].astype(np.float64) - y) ** 2))


def _as_arrays(dataset) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple) and len(dataset) == 2:
        x, y = dataset
        return np.asarray(x, np.float32), np.asarray(y, np.float32).reshape(-1)
    if len(dataset) == 0:
        raise TrainingError("dataset is empty")
    x = np.stack([np.asarray(s.input, np.float32) for s in dataset])
    y = np.array([s.label_power_w for s in dataset], np.float32)
    return x, y


def train(
    dataset,
    config: TrainConfig = TrainConfig(),
    bounds: Optional[NormalizationBounds] = None,
    validation=None,
) -> Tuple[DenseModel, TrainHistory]:
    """Fit a :class:`DenseModel` to labelled strokes.

    ``dataset`` is a list of labelled strokes or an ``(inputs, labels)``
    pair. Unless ``validation`` is given, ``config.val_fraction`` of it is
    held out for early stopping. The weights of the best validation epoch
    are returned.

    Hidden layers are He-uniform initialised; the output layer starts with
    zero weights and the mean training label as bias, so training begins
    from the best constant predictor.
    """
    if validation is None:
        x_all, y_all = _as_arrays(dataset)
        train_idx, val_idx = split_dataset(np.arange(x_all.shape[0]), config.val_fraction, config.seed)
        x, y = x_all[train_idx], y_all[train_idx]
        xv, yv = x_all[val_idx], y_all[val_idx]
    else:
        x, y = _as_arrays(dataset)
        xv, yv = _as_arrays(validation)
    if x.shape[0] == 0 or xv.shape[0] == 0:
        raise TrainingError("training or validation set is empty")
    if x.ndim != 2 or xv.ndim != 2 or xv.shape[1] != x.shape[1]:
        raise ShapeError("inputs must share one dimension")
    if bounds is None:
        bounds = NormalizationBounds()

    dims = (x.shape[1],) + tuple(config.hidden_dims) + (1,)
    rng = np.random.default_rng(config.seed)
    init = DenseModel.he_uniform(dims, rng)
    ws = [w.copy() for w in init.weights]
    bs = [b.copy() for b in init.biases]
    best = ([w.copy() for w in ws], [b.copy() for b in bs])
    hist = TrainHistory()
    n = x.shape[0]
    scale = np.float32(config.label_scale)
    to_w2 = float(config.label_scale) ** 2
    ys, yvs = y / scale, yv / scale
    # The head starts as the constant mean label; hidden layers keep He init.
    ws[-1][:] = 0.0
    bs[-1][:] = np.float32(np.mean(ys, dtype=np.float64))

    for epoch in range(config.max_epochs):
        lr = lr_schedule(config.lr0, config.decay, epoch)
        step = np.float32(lr)
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            try:
                loss, gws, gbs = backprop_gradients(ws, bs, x[idx], ys[idx])
                loss *= to_w2
            except NumericError as exc:
                raise TrainingError(str(exc), epoch) from None
            if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                raise TrainingError(f"loss diverged ({loss:g})", epoch)
            total += loss * idx.shape[0]
            for i in range(len(ws)):
                ws[i] -= step * gws[i]
                bs[i] -= step * gbs[i]
        val = _mse(ws, bs, xv, yvs) * to_w2
        if not np.isfinite(val) or val > DIVERGENCE_LIMIT:
            raise TrainingError(f"validation loss diverged ({val:g})", epoch)
        hist.lr.append(lr)
        hist.train_loss.append(total / n)
        hist.val_loss.append(val)
        if val < min(hist.val_loss[:-1], default=np.inf):
            best = ([w.copy() for w in ws], [b.copy() for b in bs])
        log.info("epoch %d lr %.5f train %.2f val %.2f", epoch, lr, total / n, val)
        verdict = early_stop_check(hist.val_loss, config.patience)
        hist.best_epoch = verdict.best_epoch
        hist.stopped_epoch = epoch
        if verdict.stop:
            break

    best[0][-1] = best[0][-1] * scale
    best[1][-1] = best[1][-1] * scale
    return DenseModel(dims, tuple(best[0]), tuple(best[1]), bounds), hist

"""Random model factories shared by several test modules."""

import numpy as np

from pedalwatt.model import DenseModel
from pedalwatt.quant import QuantizedModel, QuantLayer


def random_dense(dims, rng, bias_scale=0.1):
    ws = [rng.normal(0, 1 / np.sqrt(a), (b, a)) for a, b in zip(dims[:-1], dims[1:])]
    bs = [rng.normal(0, bias_scale, b) for b in dims[1:]]
    return DenseModel(tuple(dims), tuple(ws), tuple(bs))


def random_qmodel(dims, rng):
    """Arbitrary but well-formed int8 parameters, not derived from a float model."""
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        layers.append(
            QuantLayer(
                weight_q=rng.integers(-127, 128, (b, a)),
                weight_scale=10 ** rng.uniform(-4, -1),
                input_scale=10 ** rng.uniform(-3, 0),
                input_zp=int(rng.integers(0, 256)),
                bias_q=rng.integers(-(2**15), 2**15, b),
            )
        )
    return QuantizedModel(tuple(dims), tuple(layers), 10 ** rng.uniform(-2, 1), int(rng.integers(0, 256)))


def random_inputs(qmodel, rng, n):
    """Inputs spread over the first layer's representable range and a bit beyond."""
    first = qmodel.layers[0]
    lo = -first.input_zp * float(first.input_scale)
    hi = (255 - first.input_zp) * float(first.input_scale)
    span = hi - lo
    return rng.uniform(lo - 0.1 * span, hi + 0.1 * span, (n, qmodel.input_dim))


def run_cli(*argv):
    from pedalwatt.cli import main

    code = main([str(a) for a in argv])
    assert code == 0, f"{argv[0]} exited {code}"


def cli_chain(root, train_rides, test_ride, seed=0, max_epochs=None):
    """synth -> build-dataset -> train -> quantize -> infer -> eval -> report.

    ``train_rides`` and ``test_ride`` are ``(profile, seed)`` pairs. Returns
    the directory of each stage.
    """
    from pathlib import Path

    root = Path(root)
    d = {k: root / k for k in ("data", "train", "quant", "pred_f32", "pred_i8", "eval_f32", "eval_i8", "report")}
    ride_dirs = []
    for k, (profile, s) in enumerate(train_rides):
        rd = root / f"ride{k}"
        run_cli("synth", "--profile", profile, "--seed", s, "--out", rd)
        ride_dirs.append(rd)
    test_dir = root / "test_ride"
    run_cli("synth", "--profile", test_ride[0], "--seed", test_ride[1], "--out", test_dir)
    run_cli("build-dataset", "--streams", *ride_dirs, "--out", d["data"])
    epochs = [] if max_epochs is None else ["--max-epochs", max_epochs]
    run_cli("train", "--dataset", d["data"] / "dataset.csv", "--seed", seed, "--out", d["train"], *epochs)
    run_cli("quantize", "--model", d["train"] / "model.pwm", "--dataset", d["data"] / "dataset.csv", "--out", d["quant"])
    run_cli("infer", "--model", d["train"] / "model.pwm", "--streams", test_dir, "--out", d["pred_f32"])
    run_cli("infer", "--model", d["quant"] / "model_int8.pwm", "--quantized", "--streams", test_dir, "--out", d["pred_i8"])
    for kind in ("f32", "i8"):
        run_cli("eval", "--predictions", d[f"pred_{kind}"] / "predictions.csv", "--truth", test_dir,
                "--label", kind, "--out", d[f"eval_{kind}"])
    run_cli("report", "--eval", d["eval_f32"] / "eval.json", d["eval_i8"] / "eval.json",
            "--models", d["train"] / "model.pwm", d["quant"] / "model_int8.pwm", "--out", d["report"])
    d["rides"] = ride_dirs
    d["test_ride"] = test_dir
    return d

"""Command-line entry point: ``pedalwatt <command> [options]``.

Commands run one stage each and communicate through plain files, so a whole
experiment is a short shell script. Exit status is 0 on success, 1 on a
usage error and 2 when the input data is rejected.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .bench import LatencyReport, bench_latency
from .dataset import (
    balance_histogram,
    dataset_arrays,
    label_ride,
    read_dataset,
    read_streams,
    sort_dataset,
    window_labels,
    write_dataset,
    write_streams,
)
from .errors import ParseError, PedalwattError, ShapeError
from .metrics import EvalReport, evaluate
from .model import DenseModel, neuron_count, param_count, predict
from .modelio import load_model, save_model, serialized_size
from .pipeline import PipelineConfig, process_stream
from .quant import QuantizedModel, predict_i8, quantize_model
from .synth import PRESETS, generate_ride, protocol_profile
from .train import TrainConfig, train

log = logging.getLogger("pedalwatt")

PREDICTION_HEADER = ("start_us", "end_us", "predicted_power_w")
TRUTH_COLUMNS = ("label_power_w", "true_power_w", "power_w")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _pipeline_config(args, model=None) -> PipelineConfig:
    kwargs = {"cutoff_hz": args.cutoff_hz}
    if model is not None:
        kwargs["bounds"] = model.bounds
    return PipelineConfig(**kwargs)


def _load_for_inference(args):
    model = load_model(args.model)
    if args.quantized and not isinstance(model, QuantizedModel):
        raise PedalwattError(f"{args.model} holds a float model; run `quantize` first")
    return model


# -- commands ---------------------------------------------------------------


def cmd_synth(args) -> None:
    profile = protocol_profile(args.profile, seed=args.seed)
    ride = generate_ride(profile, seed=args.seed)
    reference = ride.reference(seed=args.seed)
    out = _out_dir(args.out)
    write_streams(out, ride.stream, reference, ride.truth)
    powers = np.array([t.true_power_w for t in ride.truth]) if ride.truth else np.zeros(1)
    (out / "ride.txt").write_text(
        f"profile: {args.profile}\nseed: {args.seed}\n"
        f"duration_s: {ride.duration_s:.3f}\nsamples: {len(ride.stream)}\n"
        f"strokes: {len(ride.truth)}\nmean_power_w: {powers.mean():.3f}\n",
        encoding="utf-8",
    )
    print(f"wrote {len(ride.stream)} samples, {len(ride.truth)} strokes to {out}")


def cmd_build_dataset(args) -> None:
    config = _pipeline_config(args)
    dataset, lines = [], []
    for d in args.streams:
        files = read_streams(d)
        ride_id = Path(d).resolve().name
        aligned = label_ride(files.stream, files.reference, ride_id, config)
        dataset.extend(aligned.strokes)
        lines.append(f"{ride_id}: {len(aligned.strokes)} strokes labelled, {aligned.dropped} without reference")
    if not dataset:
        raise PedalwattError("no labelled strokes in any input ride")
    dataset = sort_dataset(dataset)
    out = _out_dir(args.out)
    write_dataset(out / "dataset.csv", dataset)
    report = balance_histogram(dataset, bin_width_w=args.bins)
    (out / "balance.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "build.txt").write_text("\n".join(lines) + "\n\n" + report.summary(), encoding="utf-8")
    print(f"wrote {len(dataset)} strokes to {out / 'dataset.csv'}")


def _read_datasets(paths) -> list:
    data = []
    for p in paths:
        data.extend(read_dataset(p))
    if not data:
        raise PedalwattError("dataset is empty")
    return data


def cmd_train(args) -> None:
    data = _read_datasets(args.dataset)
    config = TrainConfig(
        max_epochs=args.max_epochs,
        batch_size=args.batch_size,
        lr0=args.lr,
        decay=args.decay,
        patience=args.patience,
        seed=args.seed,
    )
    model, hist = train(data, config)
    out = _out_dir(args.out)
    size = save_model(model, out / "model.pwm")
    (out / "history.csv").write_text(hist.to_csv(), encoding="utf-8")
    best = hist.best_epoch
    (out / "train.txt").write_text(
        f"strokes: {len(data)}\nlayer_dims: {list(model.layer_dims)}\n"
        f"parameters: {model.n_params}\nepochs_run: {hist.stopped_epoch + 1}\n"
        f"best_epoch: {best}\nbest_val_mse_w2: {hist.val_loss[best]:.4f}\n"
        f"model_bytes: {size}\n",
        encoding="utf-8",
    )
    print(f"trained {hist.stopped_epoch + 1} epochs (best {best}), model in {out / 'model.pwm'}")


def cmd_quantize(args) -> None:
    model = load_model(args.model)
    if not isinstance(model, DenseModel):
        raise PedalwattError(f"{args.model} is already quantised")
    x, _ = dataset_arrays(_read_datasets(args.dataset))
    qmodel = quantize_model(model, x)
    out = _out_dir(args.out)
    q_size = save_model(qmodel, out / "model_int8.pwm")
    f_size = serialized_size(model)
    (out / "memory.txt").write_text(
        f"calibration_strokes: {x.shape[0]}\nfloat32_bytes: {f_size}\nint8_bytes: {q_size}\n"
        f"ratio: {f_size / q_size:.3f}\n",
        encoding="utf-8",
    )
    print(f"int8 model {q_size} B ({f_size / q_size:.2f}x smaller) in {out / 'model_int8.pwm'}")


def cmd_infer(args) -> None:
    model = _load_for_inference(args)
    files = read_streams(args.streams)
    strokes = process_stream(files.stream, _pipeline_config(args, model))
    out = _out_dir(args.out)
    path = out / "predictions.csv"
    x = np.stack([s.input for s in strokes]) if strokes else np.zeros((0, model.input_dim))
    if x.shape[0]:
        if x.shape[1] != model.input_dim:
            raise ShapeError(f"model expects {model.input_dim} inputs, strokes give {x.shape[1]}")
        y = predict_i8(model, x) if isinstance(model, QuantizedModel) else predict(model, x)
    else:
        y = np.zeros(0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_HEADER)
        for s, p in zip(strokes, y):
            w.writerow([s.segment.start_us, s.segment.end_us, f"{float(p):.4f}"])
    print(f"wrote {len(strokes)} predictions to {path}")


def _read_table(path, required) -> tuple:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", line=1, path=path)
    header = rows[0]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", line=1, path=path)
    return header, rows[1:]


def _read_predictions(path):
    header, rows = _read_table(path, PREDICTION_HEADER)
    cols = [header.index(c) for c in PREDICTION_HEADER]
    windows, preds = [], []
    for n, row in enumerate(rows, start=2):
        try:
            windows.append((int(row[cols[0]]), int(row[cols[1]])))
            preds.append(float(row[cols[2]]))
        except (ValueError, IndexError):
            raise ParseError("malformed prediction row", line=n, path=path) from None
    return np.array(windows, dtype=np.int64).reshape(-1, 2), np.array(preds)


def _read_truth_file(path):
    header, rows = _read_table(path, ("start_us", "end_us"))
    col = next((c for c in TRUTH_COLUMNS if c in header), None)
    if col is None:
        raise ParseError(f"no power column (one of {', '.join(TRUTH_COLUMNS)})", line=1, path=path)
    k = header.index(col)
    out = []
    for n, row in enumerate(rows, start=2):
        try:
            out.append(float(row[k]))
        except (ValueError, IndexError):
            raise ParseError(f"malformed {col}", line=n, path=path) from None
    return np.array(out)


def cmd_eval(args) -> None:
    windows, preds = _read_predictions(args.predictions)
    truth_path = Path(args.truth)
    if truth_path.is_dir():
        # Label each predicted window from the ride's reference meter.
        ref = read_streams(truth_path).reference
        ts = np.array([r[0] for r in ref], dtype=np.int64)
        pw = np.array([r[1] for r in ref], dtype=np.float64)
        truths = window_labels(windows[:, 0], windows[:, 1], ts, pw)
        keep = ~np.isnan(truths)
        windows, preds, truths = windows[keep], preds[keep], truths[keep]
    else:
        truths = _read_truth_file(truth_path)
        if truths.shape != preds.shape:
            raise ShapeError(f"{preds.size} predictions but {truths.size} truth rows")
    label = args.label or Path(args.predictions).resolve().parent.name
    report = evaluate(preds, truths, windows, bin_width_w=args.bins, label=label)
    out = _out_dir(args.out)
    (out / "eval.json").write_text(report.to_json(), encoding="utf-8")
    (out / "eval.txt").write_text(report.summary(), encoding="utf-8")
    (out / "eval_bands.csv").write_text(report.bands_csv(args.bins), encoding="utf-8")
    print(report.summary(), end="")


def cmd_bench(args) -> None:
    model = _load_for_inference(args)
    files = read_streams(args.streams)
    report = bench_latency(model, files.stream, _pipeline_config(args, model))
    out = _out_dir(args.out)
    (out / "latency.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "latency.txt").write_text(report.render(), encoding="utf-8")
    print(report.render(), end="")


def _accuracy_table(reports: List[EvalReport]) -> str:
    names = [r.label or f"run {i + 1}" for i, r in enumerate(reports)]
    width = max([24] + [len(n) + 2 for n in names])
    rows = [
        ("Test samples", [f"{r.n_samples:,}" for r in reports]),
        ("Riding time", [f"{r.duration_s / 60:.0f} minutes" for r in reports]),
        ("Mean Absolute Error", [f"{r.mae_w:.3f} Watts" for r in reports]),
        ("Average power difference", [f"{r.avg_power_diff_w:.3f} Watts" for r in reports]),
    ]
    lines = ["Accuracy on synthetic rides", "", f"{'Metric':<26}" + "".join(f"{n:>{width}}" for n in names)]
    lines += [f"{k:<26}" + "".join(f"{v:>{width}}" for v in vals) for k, vals in rows]
    return "\n".join(lines) + "\n"


def _memory_table(paths) -> str:
    lines = ["Model footprint", ""]
    for p in paths:
        m = load_model(p)
        kind = "int8" if isinstance(m, QuantizedModel) else "float32"
        size = serialized_size(m)
        lines.append(
            f"{Path(p).name:<24}{kind:>8}  dims {list(m.layer_dims)}  "
            f"{param_count(m.layer_dims):,} params  {neuron_count(m.layer_dims)} neurons  "
            f"{size:,} B ({size / 1000:.1f} kB)"
        )
    return "\n".join(lines) + "\n"


def cmd_report(args) -> None:
    if not (args.eval or args.bench or args.models):
        raise UsageError("report: give at least one of --eval, --bench, --models")
    parts = []
    if args.eval:
        reports = [EvalReport.from_json(Path(p).read_text(encoding="utf-8")) for p in args.eval]
        parts.append(_accuracy_table(reports))
    if args.models:
        parts.append(_memory_table(args.models))
    if args.bench:
        parts.append(LatencyReport.from_csv(Path(args.bench).read_text(encoding="utf-8")).render())
    text = "\n".join(parts)
    out = _out_dir(args.out)
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="seed for every random draw (default 0)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    pipe = _Parser(add_help=False)
    pipe.add_argument("--cutoff-hz", type=_positive, default=10.0, help="low-pass cutoff (default 10)")

    infer = _Parser(add_help=False)
    infer.add_argument("--model", required=True, help="model file")
    infer.add_argument("--quantized", action="store_true", help="require an int8 model")
    infer.add_argument("--streams", required=True, help="ride directory with sensor.csv")

    parser = _Parser(prog="pedalwatt", description="Per-stroke cycling power estimation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic ride")
    p.add_argument("--profile", choices=PRESETS, default="band-sweep")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-dataset", parents=[common, pipe], help="segment and label rides")
    p.add_argument("--streams", nargs="+", required=True, help="ride directories")
    p.add_argument("--bins", type=_positive, default=20.0, help="balance histogram bin width in W")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", parents=[common], help="train the float model")
    p.add_argument("--dataset", nargs="+", required=True, help="dataset CSV file(s)")
    p.add_argument("--max-epochs", type=int, default=TrainConfig.max_epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=_positive, default=TrainConfig.lr0)
    p.add_argument("--decay", type=float, default=TrainConfig.decay)
    p.add_argument("--patience", type=int, default=TrainConfig.patience)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", parents=[common], help="int8 post-training quantisation")
    p.add_argument("--model", required=True, help="float model file")
    p.add_argument("--dataset", nargs="+", required=True, help="calibration dataset CSV file(s)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("infer", parents=[common, pipe, infer], help="per-stroke power for a ride")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score predictions against truth")
    p.add_argument("--predictions", required=True, help="predictions.csv from infer")
    p.add_argument("--truth", required=True, help="truth CSV (paired by row) or ride directory")
    p.add_argument("--bins", type=_positive, default=20.0, help="per-band MAE bin width in W")
    p.add_argument("--label", default="", help="column name used by report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common, pipe, infer], help="per-stroke latency breakdown")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common], help="render summary tables")
    p.add_argument("--eval", nargs="+", default=[], help="eval.json files, one column each")
    p.add_argument("--bench", help="latency.csv from bench")
    p.add_argument("--models", nargs="+", default=[], help="model files for the footprint table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"pedalwatt: error: {exc}", file=sys.stderr)
        return 1
    except (PedalwattError, OSError) as exc:
        print(f"pedalwatt: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

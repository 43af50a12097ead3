"""Train a float model on a short synthetic session, quantise it, and compare.

Run:  python demos/quantize_model.py --minutes 30
"""

import argparse
import time

import numpy as np

from pedalwatt.dataset import dataset_arrays, label_ride
from pedalwatt.metrics import avg_power_diff, mae
from pedalwatt.model import predict
from pedalwatt.modelio import serialized_size
from pedalwatt.quant import predict_i8, quantize_model
from pedalwatt.synth import RideProfile, generate_ride, protocol_profile
from pedalwatt.train import TrainConfig, train


def session(seed, minutes):
    prof = protocol_profile("band-sweep", seed=seed)
    # Keep whole 15 s segments, spread over all bands.
    keep = max(1, int(round(minutes * 4)))
    step = max(1, len(prof.segments) // keep)
    prof = RideProfile(prof.segments[::step][:keep], name="demo")
    ride = generate_ride(prof, seed=seed)
    return dataset_arrays(label_ride(ride.stream, ride.reference(seed=seed), f"s{seed}").strokes)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--minutes", type=float, default=30.0, help="riding time of the training session")
    ap.add_argument("--epochs", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    x, y = session(args.seed + 1, args.minutes)
    xt, yt = session(args.seed + 2, args.minutes / 2)
    print(f"train {len(y)} strokes, test {len(yt)} strokes")

    t0 = time.perf_counter()
    model, hist = train((x, y), TrainConfig(max_epochs=args.epochs, seed=args.seed))
    print(f"trained {hist.stopped_epoch + 1} epochs in {time.perf_counter() - t0:.1f} s (best epoch {hist.best_epoch})")

    qmodel = quantize_model(model, x)
    pf, pq = predict(model, xt), predict_i8(qmodel, xt)

    print(f"{'':10}{'MAE':>10}{'avg diff':>10}{'bytes':>10}")
    print(f"{'float32':10}{mae(pf, yt):>9.2f}W{avg_power_diff(pf, yt):>9.2f}W{serialized_size(model):>10,}")
    print(f"{'int8':10}{mae(pq, yt):>9.2f}W{avg_power_diff(pq, yt):>9.2f}W{serialized_size(qmodel):>10,}")
    d = np.abs(pq - pf)
    print(f"per-stroke |int8 - float32|: median {np.median(d):.2f} W, p95 {np.percentile(d, 95):.2f} W")


if __name__ == "__main__":
    main()

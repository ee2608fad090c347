#!/usr/bin/env python3
"""End-to-end demo on a synthetic multi-region series.

Generates sinusoidal flow data, trains the forecaster through the CLI code
path, evaluates against the persistence baseline, and exports the learned
adjacency matrix. Everything lands in --out (default ./runs/synthetic).
"""

import argparse
import json
import os

import numpy as np

from flowcast.cli import main as cli_main
from flowcast.synthetic import sinusoid_dataset


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=10)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/synthetic")
    return ap.parse_args()


def main():
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "series.csv")
    # brisk periods: one-hour-ahead persistence is genuinely weak here, so a
    # trained model separates itself from the baseline within about a minute
    ds = sinusoid_dataset(nodes=args.nodes, steps=args.steps, seed=args.seed,
                          period_range=(16.0, 48.0))
    np.savetxt(data_path, ds.values, delimiter=",", fmt="%.4f")

    cfg = {
        "data": {"path": data_path, "format": "csv"},
        "model": {"channels": [args.channels] * 4, "head_hidden": args.channels},
        "train": {"epochs": args.epochs, "batch_size": 64, "seed": args.seed},
        "output": {"dir": args.out},
    }
    cfg_path = os.path.join(args.out, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg, fh, indent=2)

    rc = cli_main(["train", "--config", cfg_path])
    if rc != 0:
        raise SystemExit(rc)
    ckpt = os.path.join(args.out, "best.ckpt")
    cli_main(["export-aam", ckpt, "0", "--out", args.out])
    cli_main(["export-aam", ckpt, "0", "--reversed", "--out", args.out])
    cli_main(["predict", ckpt, "0", "--out", args.out])

    with open(os.path.join(args.out, "metrics.json")) as fh:
        metrics = json.load(fh)
    print("\ntest metrics:   ", metrics["test"])
    print("persistence:    ", metrics["persistence"]["test"])
    print(f"artifacts in {args.out}/")


if __name__ == "__main__":
    main()

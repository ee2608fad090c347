"""Command-line interface.

Subcommands: train, eval, predict, gradcheck, export-aam, ablate, config.
Exit codes: 0 ok, 2 input error, 3 corrupt artifact, 4 numerical failure.

eval / predict / export-aam rebuild the model from the config echoed inside
the checkpoint, so a checkpoint plus a data file is all they need; --data
overrides the data path recorded at training time. Window indices count
over the full chronological window list of the given series.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from . import config as C
from . import gradcheck
from . import tensor as T
from .data import DataError, PreparedData, load_dataset, make_batch, prepare
from .model import Forecaster
from .optim import NumericalError
from .training import evaluate, persistence_metrics, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CORRUPT = 3
EXIT_NUMERICAL = 4


def _prepare_from_config(cfg: C.RunConfig) -> PreparedData:
    ds = load_dataset(cfg.data.path, cfg.data.format, cfg.data.zeros_as_missing)
    return prepare(ds, t_in=cfg.model.t_in, t_out=cfg.model.horizon)


def _write_json(path: str, doc: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_train_log(path: str, result) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_huber", "train_contrast",
                         "val_rmse", "val_mae", "val_mape"])
        for e in result.epochs:
            writer.writerow([e.epoch, repr(e.lr), repr(e.train_huber), repr(e.train_contrast),
                             repr(e.val_rmse), repr(e.val_mae), repr(e.val_mape)])


def _run_one_training(cfg: C.RunConfig, prep: PreparedData, seed: int):
    model = Forecaster(cfg.model, seed=seed)
    result = train(model, prep, dataclasses.replace(cfg.train, seed=seed))
    model.load_state_arrays(result.best_state)
    test = evaluate(model, prep, "test", cfg.train.batch_size)
    return model, result, test


def cmd_train(args) -> int:
    if args.repeat < 1:
        raise C.ConfigError(f"--repeat must be >= 1, got {args.repeat}")
    cfg = C.load(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.out is not None:
        cfg.output.dir = args.out
    out_dir = cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    prep = _prepare_from_config(cfg)

    seeds = [cfg.train.seed + r for r in range(args.repeat)]
    runs = []
    diverged = False
    parameter_count = 0
    for seed in seeds:
        model, result, test = _run_one_training(cfg, prep, seed)
        diverged |= result.diverged
        parameter_count = result.parameter_count
        suffix = "" if args.repeat == 1 else f"_seed{seed}"
        header_cfg = C.to_dict(cfg)
        header_cfg["train"]["seed"] = seed
        ckpt.save(os.path.join(out_dir, f"best{suffix}.ckpt"),
                  {k: v for k, v in result.best_state.items()},
                  {"run": header_cfg, "num_nodes": prep.num_nodes,
                   "parameter_count": result.parameter_count},
                  result.best_epoch, result.best_val_mae)
        _write_train_log(os.path.join(out_dir, f"train_log{suffix}.csv"), result)
        runs.append({"seed": seed, "best_epoch": result.best_epoch,
                     "best_val_mae": result.best_val_mae, "test": test.as_dict(),
                     "diverged": result.diverged})
        logger.info("seed %d: test rmse %.4f mae %.4f mape %.4f",
                    seed, test.rmse, test.mae, test.mape)

    doc = {
        "runs": runs,
        "parameter_count": parameter_count,
        "persistence": {"val": persistence_metrics(prep, "val").as_dict(),
                        "test": persistence_metrics(prep, "test").as_dict()},
        "timestamp": datetime.datetime.now().isoformat(),
    }
    if args.repeat == 1:
        doc["test"] = runs[0]["test"]
    else:
        for metric in ("rmse", "mae", "mape"):
            vals = [r["test"][metric] for r in runs]
            doc[f"test_{metric}_mean"] = float(np.mean(vals))
            doc[f"test_{metric}_std"] = float(np.std(vals))
    _write_json(os.path.join(out_dir, "metrics.json"), doc)
    print(json.dumps(doc["runs"][-1]["test"] if args.repeat == 1 else
                     {k: v for k, v in doc.items() if k.startswith("test_")}, indent=2))
    if diverged:
        print("training diverged; last good checkpoint retained", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _load_model_for(args) -> tuple[Forecaster, C.RunConfig, PreparedData, dict]:
    params, header = ckpt.load(args.checkpoint)
    try:
        cfg = C.from_dict(header["config"]["run"])
        trained_nodes = int(header["config"]["num_nodes"])
    except (KeyError, TypeError) as exc:
        raise ckpt.CheckpointError(f"checkpoint header incomplete: {exc}") from None
    if args.data is not None:
        cfg.data.path = args.data
    if getattr(args, "format", None):
        cfg.data.format = args.format
    prep = _prepare_from_config(cfg)
    if prep.num_nodes != trained_nodes:
        raise DataError(f"checkpoint was trained on {trained_nodes} nodes, "
                        f"data has {prep.num_nodes}")
    model = Forecaster(cfg.model, seed=cfg.train.seed)
    model.load_state_arrays(params)
    return model, cfg, prep, header


def cmd_eval(args) -> int:
    model, cfg, prep, header = _load_model_for(args)
    test = evaluate(model, prep, "test", cfg.train.batch_size)
    doc = {"test": test.as_dict(),
           "checkpoint": {"epoch": header["epoch"], "val_mae": header["val_mae"]},
           "persistence": {"val": persistence_metrics(prep, "val").as_dict(),
                           "test": persistence_metrics(prep, "test").as_dict()},
           "timestamp": datetime.datetime.now().isoformat()}
    out_dir = args.out or cfg.output.dir
    _write_json(os.path.join(out_dir, "metrics.json"), doc)
    print(json.dumps(doc["test"], indent=2))
    return EXIT_OK


def _window_batch(prep: PreparedData, index: int):
    total = sum(len(s) for s in prep.splits.values())
    if not 0 <= index < total:
        raise DataError(f"window index {index} out of range [0, {total})")
    return make_batch(prep, np.array([index]))


def cmd_predict(args) -> int:
    model, cfg, prep, _ = _load_model_for(args)
    batch = _window_batch(prep, args.window_index)
    with T.no_grad():
        yhat, _ = model.forward(T.Tensor(batch.inputs))
    pred = prep.stats.invert(yhat.data[0])          # [h, n]
    out_dir = args.out or cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"forecast_w{args.window_index}.csv")
    np.savetxt(path, pred, delimiter=",", fmt="%.6f")
    print(path)
    return EXIT_OK


def cmd_export_aam(args) -> int:
    model, cfg, prep, _ = _load_model_for(args)
    if model.edge_graph is None:
        raise DataError("checkpoint was trained without the edge graph block; no matrix to export")
    batch = _window_batch(prep, args.window_index)
    with T.no_grad():
        _, state = model.forward(T.Tensor(batch.inputs))
    pair = state.adjacency(0)
    matrix = pair.adj_reversed if args.reversed else pair.adj
    out_dir = args.out or cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    name = f"aam{'_reversed' if args.reversed else ''}_w{args.window_index}.csv"
    path = os.path.join(out_dir, name)
    np.savetxt(path, matrix, delimiter=",", fmt="%.8f")
    print(path)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.size != "toy":
        raise C.ConfigError(f"unknown gradcheck size preset {args.size!r}")
    results = gradcheck.run_all(seed=args.seed if args.seed is not None else 0)
    width = max(len(r.name) for r in results)
    all_pass = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        all_pass &= r.passed
        print(f"{r.name:<{width}s}  max_rel_err {r.max_rel_err:.3e}  {status}")
    print(f"gradcheck: {'all ops pass' if all_pass else 'FAILURES present'} "
          f"(tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_OK if all_pass else EXIT_NUMERICAL


ABLATION_PRESETS = {
    "table3": [
        ("1_backbone_only", {"use_es": False, "lambda": 0.0}),
        ("2_edges_no_contrast", {"lambda": 0.0}),
        ("3_default", {}),
        ("4_lambda_0.3", {"lambda": 0.3}),
        ("5_lambda_0.5", {"lambda": 0.5}),
        ("6_lambda_0.7", {"lambda": 0.7}),
        ("7_lambda_0.9", {"lambda": 0.9}),
        ("8_attention_avg", {"attention_op": "avg"}),
        ("9_attention_max_learned", {"attention_op": "max_learned"}),
        ("10_representative_middle", {"representative": "middle"}),
        ("11_representative_first", {"representative": "first"}),
    ],
}


def cmd_ablate(args) -> int:
    if args.preset not in ABLATION_PRESETS:
        raise C.ConfigError(f"unknown ablation preset {args.preset!r}; "
                            f"available: {', '.join(ABLATION_PRESETS)}")
    cfg = C.load(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.out is not None:
        cfg.output.dir = args.out
    prep = _prepare_from_config(cfg)

    rows = []
    for name, overrides in ABLATION_PRESETS[args.preset]:
        doc = C.to_dict(cfg)
        doc["model"].update(overrides)
        case_cfg = C.from_dict(doc)
        _, result, test = _run_one_training(case_cfg, prep, case_cfg.train.seed)
        rows.append({"case": name, **test.as_dict(),
                     "best_val_mae": result.best_val_mae, "diverged": result.diverged})
        logger.info("ablation %s: rmse %.4f mae %.4f mape %.4f",
                    name, test.rmse, test.mae, test.mape)

    out_dir = cfg.output.dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "ablation.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    _write_json(os.path.join(out_dir, "ablation.json"),
                {"preset": args.preset, "cases": rows,
                 "timestamp": datetime.datetime.now().isoformat()})
    width = max(len(r["case"]) for r in rows)
    for r in rows:
        print(f"{r['case']:<{width}s}  rmse {r['rmse']:8.4f}  mae {r['mae']:8.4f}  "
              f"mape {r['mape']:7.4f}")
    return EXIT_OK


def cmd_config(args) -> int:
    if args.dump_defaults:
        print(C.dump_defaults())
        return EXIT_OK
    if args.check:
        C.load(args.check)
        print(f"{args.check}: ok")
        return EXIT_OK
    raise C.ConfigError("config: nothing to do (use --dump-defaults or --check PATH)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowcast",
                                     description="Traffic-flow forecasting engine")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--repeat", type=int, default=1, help="train N seeds and aggregate")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("checkpoint")
    p.add_argument("--data", default=None)
    p.add_argument("--format", default=None, choices=["csv", "bin"])
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="write the forecast for one input window")
    p.add_argument("checkpoint")
    p.add_argument("window_index", type=int)
    p.add_argument("--data", default=None)
    p.add_argument("--format", default=None, choices=["csv", "bin"])
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("export-aam", help="write the adjacency matrix for one window")
    p.add_argument("checkpoint")
    p.add_argument("window_index", type=int)
    p.add_argument("--reversed", action="store_true")
    p.add_argument("--data", default=None)
    p.add_argument("--format", default=None, choices=["csv", "bin"])
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_export_aam)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--size", default="toy")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and score a preset family of variants")
    p.add_argument("preset")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("config", help="configuration utilities")
    p.add_argument("--dump-defaults", action="store_true")
    p.add_argument("--check", default=None)
    p.set_defaults(fn=cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except (C.ConfigError, DataError, T.ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ckpt.CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except (NumericalError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

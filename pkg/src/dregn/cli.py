"""Command-line entry point: train, eval, sweep, synth, curves."""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

from .data import load_directory, load_interactions, split_holdout
from .experiments import iterations_to_fraction
from .metrics import evaluate
from .model import (
    CheckpointError,
    PropagationGraph,
    ScorerModel,
    load_checkpoint,
    propagate,
    save_checkpoint,
)
from .risk import FAMILIES, WEIGHTINGS, RiskConfig
from .synth import make_corpus, write_corpus
from .trainer import TrainConfig, TrainingDiverged, TrainLog, train


log = logging.getLogger("dregn")


MODEL_DEFAULTS = {"backbone": "lightgc", "dim": 64, "layers": 3, "val_fraction": 0.1,
                  "split_seed": 0, "format": "adjacency-text"}

# flag dest -> resolved config key
RISK_FLAGS = {"risk": "family", "weighting": "weighting", "is_correction": "is_correction",
              "nn": "nn_correction", "dbar": "d_bar", "lam": "lambda", "c0": "c0",
              "alpha": "alpha"}
TRAIN_FLAGS = {"optimizer": "optimizer", "lr": "learning_rate", "epochs": "epochs",
               "eval_every": "eval_every", "patience": "early_stop_patience", "seed": "seed",
               "batch_users": "batch_users", "K": "K"}
MODEL_FLAGS = {k: k for k in MODEL_DEFAULTS}


class UsageError(Exception):
    pass


def _add_run_flags(p):
    p.add_argument("--data", help="directory with train.txt / test.txt [/ val.txt]")
    p.add_argument("--train-file")
    p.add_argument("--test-file")
    p.add_argument("--format", choices=["adjacency-text", "triple-csv"])
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--manifest", help="replay the resolved configuration of an earlier run")
    p.add_argument("--frozen", help="checkpoint providing hard_static weights")
    p.add_argument("--out", default="runs", help="parent directory for run directories")

    g = p.add_argument_group("risk")
    g.add_argument("--risk", choices=FAMILIES)
    g.add_argument("--weighting", choices=WEIGHTINGS)
    g.add_argument("--is-correction", dest="is_correction", action=argparse.BooleanOptionalAction)
    g.add_argument("--nn", dest="nn", action=argparse.BooleanOptionalAction)
    g.add_argument("--dbar", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--c0", type=float)
    g.add_argument("--alpha", type=float)

    g = p.add_argument_group("training")
    g.add_argument("--optimizer", choices=["adam", "sgd"])
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--eval-every", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--batch-users", type=int)
    g.add_argument("-K", "--K", dest="K", type=int)

    g = p.add_argument_group("model")
    g.add_argument("--backbone", choices=["mf", "lightgc"])
    g.add_argument("--dim", type=int)
    g.add_argument("--layers", type=int)
    g.add_argument("--val-fraction", type=float)
    g.add_argument("--split-seed", type=int)


def _defaults():
    out = dict(MODEL_DEFAULTS)
    out.update(RiskConfig().to_dict())
    out.update(asdict(TrainConfig()))
    return out


def resolve_config(args):
    """Defaults < manifest/config file < explicit flags."""
    cfg = _defaults()
    if getattr(args, "manifest", None):
        with open(args.manifest) as fh:
            m = json.load(fh)
        cfg.update(m["config"])
        for k in ("data", "train_file", "test_file", "frozen"):
            if getattr(args, k) is None and m.get("inputs", {}).get(k):
                setattr(args, k, m["inputs"][k])
    if getattr(args, "config", None):
        text = Path(args.config).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{args.config}:{lineno}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in cfg:
                raise UsageError(f"{args.config}:{lineno}: unknown key {k!r}")
            cfg[k] = v
    for table in (RISK_FLAGS, TRAIN_FLAGS, MODEL_FLAGS):
        for dest, key in table.items():
            val = getattr(args, dest, None)
            if val is not None:
                cfg[key] = val
    return cfg


def build_configs(cfg):
    risk_keys = set(RiskConfig().to_dict())
    try:
        risk = RiskConfig.from_dict({k: cfg[k] for k in risk_keys})
        tkw = {}
        for f in fields(TrainConfig):
            default = getattr(TrainConfig, f.name)
            tkw[f.name] = type(default)(cfg[f.name])
        trn = TrainConfig(**tkw)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    model = {"backbone": str(cfg["backbone"]), "dim": int(cfg["dim"]),
             "layers": int(cfg["layers"]), "val_fraction": float(cfg["val_fraction"]),
             "split_seed": int(cfg["split_seed"]), "format": str(cfg["format"])}
    frozen = {**risk.to_dict(), **asdict(trn), **model}
    return risk, trn, model, frozen


def load_data(args, model_cfg):
    if args.data:
        path = Path(args.data)
        if not path.is_dir() or not (path / "train.txt").exists():
            raise UsageError(f"dataset directory {path} missing or has no train.txt")
        return load_directory(path, model_cfg["val_fraction"], model_cfg["split_seed"])
    if args.train_file:
        if not Path(args.train_file).exists():
            raise UsageError(f"train file {args.train_file} not found")
        ds = load_interactions(args.train_file, model_cfg["format"], test_path=args.test_file)
        if model_cfg["val_fraction"] > 0:
            ds = split_holdout(ds, model_cfg["val_fraction"], model_cfg["split_seed"])
        return ds
    raise UsageError("one of --data or --train-file is required")


def _run_dir(root, frozen_cfg):
    digest = hashlib.sha256(json.dumps(frozen_cfg, sort_keys=True).encode()).hexdigest()[:8]
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(root) / f"{stamp}-{digest}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}.{n}")
        n += 1
    path.mkdir(parents=True)
    return path


def run_training(args, cfg):
    """Train once; returns (run_dir, best validation record or None)."""
    risk, trn, model_cfg, frozen_cfg = build_configs(cfg)
    ds = load_data(args, model_cfg)
    frozen = load_checkpoint(args.frozen) if args.frozen else None
    if risk.weighting == "hard_static" and risk.family != "bpr" and frozen is None:
        raise UsageError("--weighting hard_static needs --frozen CHECKPOINT")
    run = _run_dir(args.out, frozen_cfg)
    manifest = {
        "config": frozen_cfg,
        "dataset": ds.fingerprint(),
        "seed": trn.seed,
        "inputs": {"data": args.data, "train_file": args.train_file,
                   "test_file": args.test_file, "frozen": args.frozen},
        "artifacts": {"best": "best.npz", "final": "final.npz", "log": "log.jsonl",
                      "curve": "log.csv", "metrics": "metrics.json"},
    }
    (run / "manifest.json").write_text(json.dumps(manifest, indent=2))
    model = ScorerModel.init(ds.num_users, ds.num_items, d=model_cfg["dim"],
                             backbone=model_cfg["backbone"], num_layers=model_cfg["layers"],
                             seed=trn.seed)
    best, tlog = train(ds, model, risk, trn, frozen=frozen,
                       callback=lambda r: log.info("epoch %(epoch)d it %(iteration)d", r))
    save_checkpoint(best, run / "best.npz")
    save_checkpoint(model, run / "final.npz")
    tlog.write_jsonl(run / "log.jsonl")
    tlog.write_csv(run / "log.csv")
    best_rec = None
    if tlog.records and "ndcg" in tlog.records[0]:
        best_rec = max(tlog.records, key=lambda r: r["ndcg"])
    (run / "metrics.json").write_text(json.dumps({"best_validation": best_rec}, indent=2))
    return run, best_rec


def cmd_train(args):
    cfg = resolve_config(args)
    run, best = run_training(args, cfg)
    print(f"run directory: {run}")
    if best is not None:
        print(f"validation R@{cfg['K']}={best['recall']:.4f} "
              f"nDCG@{cfg['K']}={best['ndcg']:.4f} (epoch {best['epoch']})")
    return 0


def cmd_eval(args):
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint {args.checkpoint} not found")
    model = load_checkpoint(args.checkpoint)
    cfg = resolve_config(args)
    _, _, model_cfg, _ = build_configs(cfg)
    ds = load_data(args, model_cfg)
    if (ds.num_users, ds.num_items) != (model.num_users, model.num_items):
        raise UsageError("checkpoint shape does not match the dataset")
    graph = PropagationGraph.from_dataset(ds)
    rep = evaluate(*propagate(model, graph), ds, args.split, args.K)
    row = {"split": args.split, **rep.as_dict()}
    print(json.dumps(row))
    out = Path(args.report) if args.report else Path(args.checkpoint).with_suffix(
        f".{args.split}.K{args.K}.csv")
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)
    return 0


def _grid(values, default):
    return [float(v) for v in values] if values else [default]


def cmd_sweep(args):
    base = resolve_config(args)
    load_data(args, build_configs(base)[2])  # bad paths are a usage error, not a failed point
    lams = _grid(args.lambdas, float(base["lambda"]))
    dbars = _grid(args.dbars, float(base["d_bar"]))
    lrs = _grid(args.lrs, float(base["learning_rate"]))
    rows = []
    for lam, dbar, lr in itertools.product(lams, dbars, lrs):
        cfg = dict(base, **{"lambda": lam, "d_bar": dbar, "learning_rate": lr})
        row = {"lambda": lam, "d_bar": dbar, "learning_rate": lr}
        try:
            run, best = run_training(args, cfg)
            row.update(status="ok", run=str(run),
                       recall=best["recall"] if best else None,
                       ndcg=best["ndcg"] if best else None)
        except (UsageError, TrainingDiverged, ValueError, FloatingPointError) as exc:
            row.update(status="failed", run="", recall=None, ndcg=None, error=str(exc))
        rows.append(row)
        print(json.dumps(row), flush=True)
    rows.sort(key=lambda r: (r["status"] != "ok", -(r["ndcg"] or 0.0)))
    summary = Path(args.out) / "sweep_summary.csv"
    summary.parent.mkdir(parents=True, exist_ok=True)
    cols = ["rank", "status", "lambda", "d_bar", "learning_rate", "recall", "ndcg", "run", "error"]
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for k, r in enumerate(rows, 1):
            w.writerow({"rank": k, "error": "", **r})
    print(f"summary: {summary}")
    return 0


def cmd_synth(args):
    corpus = make_corpus(args.users, args.items, args.positives, rank=args.rank,
                         scale=args.scale, item_bias=args.item_bias,
                         activity_spread=args.activity_spread,
                         test_fraction=args.test_fraction, seed=args.seed)
    out = write_corpus(corpus, args.out)
    print(f"wrote {corpus.dataset.num_interactions} train interactions to {out}")
    return 0


def _parse_log_arg(spec):
    if "=" in spec:
        name, path = spec.split("=", 1)
    else:
        path = spec
        name = Path(spec).parent.name or Path(spec).stem
    return name, path


def cmd_curves(args):
    rows, summary = [], []
    for spec in args.logs:
        name, path = _parse_log_arg(spec)
        tlog = TrainLog.read_jsonl(path)
        if not tlog.records:
            raise ValueError(f"{path}: empty log")
        for rec in tlog.records:
            rows.append({"method": name, "iteration": rec["iteration"],
                         "seconds": rec.get("seconds"), "recall": rec["recall"],
                         "ndcg": rec["ndcg"]})
        summary.append({"method": name,
                        "final_recall": tlog.records[-1]["recall"],
                        "iterations_to_95pct": iterations_to_fraction(tlog, "recall", 0.95),
                        "total_iterations": tlog.records[-1]["iteration"]})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["method", "iteration", "seconds", "recall", "ndcg"])
        w.writeheader()
        w.writerows(rows)
    summ = out.with_name(out.stem + "_summary.csv")
    with open(summ, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]))
        w.writeheader()
        w.writerows(summary)
    for s in summary:
        print(f"{s['method']}: 95% of final R@K at iteration {s['iterations_to_95pct']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dregn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_run_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["validation", "test"], default="test")
    p.add_argument("--report", help="CSV path for the metric row")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over lambda / d_bar / learning rate")
    _add_run_flags(p)
    p.add_argument("--lambdas", nargs="+")
    p.add_argument("--dbars", nargs="+")
    p.add_argument("--lrs", nargs="+")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic corpus with known ratios")
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--items", type=int, default=30)
    p.add_argument("--positives", type=int, default=10, help="positives per user")
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--item-bias", type=float, default=1.0)
    p.add_argument("--activity-spread", type=float, default=0.0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("curves", help="merge training logs into one CSV")
    p.add_argument("logs", nargs="+", help="log.jsonl paths, optionally NAME=PATH")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (CheckpointError, TrainingDiverged, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

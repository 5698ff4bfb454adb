"""Command-line entry points: ``gen-synth``, ``corrupt``, ``train`` and ``report``.

Exit codes: 0 on success, 1 on a training fault, 2 on I/O or configuration errors.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint
from .datasets import make_synth, read_csv, read_idx, read_labels_column, write_csv, SYNTH_KINDS
from .detect import GRID_SIZE, build_report
from .errors import FormatError, InvalidInputError, TrainingFault
from .noise import NoisyDataset, check_transition_matrix, corrupt_ccn, read_flip_mask, uniform_flip_matrix, write_flip_mask
from .objective import METHODS
from .train import RunHistory, TrainConfig, train_run

log = logging.getLogger("iceconf")

MANIFEST = "dataset.json"
RUN_SPEC = "run_spec.json"
HISTORY = "history.json"
CHECKPOINT = "checkpoint.bin"


class ConfigError(Exception):
    pass


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file or directory: {path}")
    return path


def load_features_labels(data, labels=None):
    """Read a raw source: a ``.csv`` file, or an IDX image file plus ``labels``."""
    _require(data)
    if data.endswith(".csv"):
        return read_csv(data)
    if labels is None:
        raise ConfigError(f"{data}: IDX features need --labels")
    return read_idx(data, expect="images"), read_idx(_require(labels), expect="labels")


def _write_matrix(path, T):
    with open(path, "w") as fh:
        fh.writelines(",".join(repr(float(v)) for v in row) + "\n" for row in T)


def _read_matrix(path):
    with open(_require(path)) as fh:
        return np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])


def load_dataset(data, labels=None):
    """Load a corrupted dataset directory (``dataset.json``) or a raw clean source."""
    if os.path.isdir(data):
        manifest_path = _require(os.path.join(data, MANIFEST))
        with open(manifest_path) as fh:
            man = json.load(fh)
        feat = man["features"]
        x, _ = load_features_labels(feat["path"], feat.get("labels"))
        noisy = read_labels_column(os.path.join(data, man["noisy_labels"]), "label")
        clean = read_labels_column(os.path.join(data, man["clean_labels"]), "label") if man.get("clean_labels") else None
        mask = read_flip_mask(os.path.join(data, man["flip_mask"])) if man.get("flip_mask") else None
        T = _read_matrix(os.path.join(data, man["transition"])) if man.get("transition") else None
        return NoisyDataset(x, noisy, man["num_classes"], clean_labels=clean, flip_mask=mask, transition=T)
    x, y = load_features_labels(data, labels)
    return NoisyDataset(x, y, int(y.max()) + 1 if len(y) else 2)


def cmd_gen_synth(args):
    x, y = make_synth(args.kind, args.n, args.seed, balance=args.balance, separation=args.separation)
    write_csv(args.out, x, y)
    log.info("wrote %d points to %s", len(y), args.out)


def cmd_corrupt(args):
    x, y = load_features_labels(args.data, args.labels)
    k = args.num_classes or int(y.max()) + 1
    if args.noise_matrix:
        T = check_transition_matrix(_read_matrix(args.noise_matrix), k)
        noise = {"kind": "matrix", "matrix": os.path.abspath(args.noise_matrix)}
    else:
        if args.noise_rate is None:
            raise ConfigError("corrupt needs --noise-rate or --noise-matrix")
        T = uniform_flip_matrix(k, args.noise_rate)
        noise = {"kind": "uniform", "rho": args.noise_rate}
    noise["seed"] = args.seed
    noisy, mask = corrupt_ccn(y, T, args.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "noisy_labels.csv"), "w") as fh:
        fh.write("label\n")
        fh.writelines(f"{int(v)}\n" for v in noisy)
    with open(os.path.join(args.out, "clean_labels.csv"), "w") as fh:
        fh.write("label\n")
        fh.writelines(f"{int(v)}\n" for v in y)
    write_flip_mask(os.path.join(args.out, "flip_mask.csv"), mask)
    _write_matrix(os.path.join(args.out, "transition.csv"), T)
    features = {"format": "csv" if args.data.endswith(".csv") else "idx", "path": os.path.abspath(args.data)}
    if features["format"] == "idx":
        features["labels"] = os.path.abspath(args.labels)
    _dump_json(
        os.path.join(args.out, MANIFEST),
        {
            "format": "iceconf-dataset",
            "version": 1,
            "features": features,
            "num_classes": k,
            "noisy_labels": "noisy_labels.csv",
            "clean_labels": "clean_labels.csv",
            "flip_mask": "flip_mask.csv",
            "transition": "transition.csv",
            "noise": noise,
        },
    )
    log.info("flipped %d of %d labels (%.4f)", mask.sum(), len(mask), mask.mean() if len(mask) else 0.0)


# train flags that map one-to-one onto TrainConfig fields
_TRAIN_FLAGS = {
    "method": str,
    "seed": int,
    "optimizer": str,
    "lr": float,
    "lr_end": float,
    "momentum": float,
    "weight_decay": float,
    "schedule": str,
    "warmup_iters": int,
    "batch_size": int,
    "total_iters": int,
    "val_fraction": float,
    "init_confidence": float,
    "confidence_lr_scale": float,
    "epsilon": float,
    "beta": float,
    "gce_q": float,
}
_DATA_KEYS = ("data", "labels", "test_data", "test_labels", "out")


def resolve_run_spec(args):
    """Merge ``--config`` with command-line flags (flags win)."""
    spec = {}
    if args.config:
        with open(_require(args.config)) as fh:
            try:
                spec = json.load(fh)
            except ValueError as exc:
                raise ConfigError(f"{args.config}: {exc}") from None
    for key in _DATA_KEYS + tuple(_TRAIN_FLAGS) + ("hidden",):
        val = getattr(args, key, None)
        if val is not None:
            spec[key] = val
    if isinstance(spec.get("hidden"), str):
        spec["hidden"] = [int(v) for v in spec["hidden"].split(",") if v]
    for key in ("data", "out"):
        if not spec.get(key):
            raise ConfigError(f"train needs --{key} (flag or config key)")
    for key in ("data", "labels", "test_data", "test_labels"):
        if spec.get(key):
            spec[key] = os.path.abspath(spec[key])
    train = {k: v for k, v in spec.items() if k not in _DATA_KEYS}
    cfg = TrainConfig.from_dict(train)
    resolved = {k: spec.get(k) for k in _DATA_KEYS}
    resolved.update(cfg.to_dict())
    return resolved, cfg


def cmd_train(args):
    spec, cfg = resolve_run_spec(args)
    dataset = load_dataset(spec["data"], spec.get("labels"))
    test = None
    if spec.get("test_data"):
        test = load_features_labels(spec["test_data"], spec.get("test_labels"))
    out = spec["out"]
    os.makedirs(out, exist_ok=True)
    _dump_json(os.path.join(out, RUN_SPEC), spec)

    def progress(rec):
        log.info("epoch %d iter %d train_loss %.4f val_acc %s", rec.epoch, rec.iteration, rec.train_loss, rec.val_acc)

    trained, history = train_run(dataset, cfg, test=test, log=progress)
    checkpoint.save(os.path.join(out, CHECKPOINT), trained.classifier, trained.confidence, seed=cfg.seed, meta={"method": cfg.method})
    history.dump(os.path.join(out, HISTORY))


def cmd_report(args):
    run_dir = args.run_dir or args.out
    if not run_dir:
        raise ConfigError("report needs a run directory")
    with open(_require(os.path.join(run_dir, RUN_SPEC))) as fh:
        spec = json.load(fh)
    history = RunHistory.load(_require(os.path.join(run_dir, HISTORY)))
    dataset = load_dataset(spec["data"], spec.get("labels"))
    report = build_report(history, dataset, grid_size=args.grid_size)
    report.dump(os.path.join(run_dir, "report.json"), top_k=None)
    top_k = min(args.top_k, len(report.ranked))
    with open(os.path.join(run_dir, "ranked.csv"), "w") as fh:
        fh.write("rank,index,confidence\n")
        for r, (i, c) in enumerate(report.ranked[:top_k]):
            fh.write(f"{r},{i},{c!r}\n")
    report.write_curves_csv(os.path.join(run_dir, "curves.csv"))
    if report.auroc is not None:
        log.info("AUROC (flipped vs clean, score 1 - C): %.4f", report.auroc)


def build_parser():
    p = argparse.ArgumentParser(prog="iceconf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a 2-d two-class CSV dataset")
    g.add_argument("--kind", choices=SYNTH_KINDS, default="two_gaussians")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--balance", type=float, default=0.5, help="fraction of class 0")
    g.add_argument("--separation", type=float, default=2.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    c = sub.add_parser("corrupt", help="inject synthetic label noise")
    c.add_argument("--data", required=True, help="CSV dataset or IDX image file")
    c.add_argument("--labels", help="IDX label file (with IDX --data)")
    c.add_argument("--num-classes", type=int)
    c.add_argument("--noise-rate", type=float)
    c.add_argument("--noise-matrix", help="CSV K x K transition matrix")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_corrupt)

    t = sub.add_parser("train", help="train a classifier")
    t.add_argument("--config")
    t.add_argument("--data", help="corrupt output directory, CSV file or IDX image file")
    t.add_argument("--labels")
    t.add_argument("--test-data")
    t.add_argument("--test-labels")
    t.add_argument("--out")
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--seed", type=int)
    t.add_argument("--iters", dest="total_iters", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--optimizer", choices=("adam", "sgd"))
    t.add_argument("--lr", type=float)
    t.add_argument("--lr-end", type=float)
    t.add_argument("--momentum", type=float)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--schedule", choices=("exponential", "warmup_linear", "constant"))
    t.add_argument("--warmup-iters", type=int)
    t.add_argument("--val-fraction", type=float)
    t.add_argument("--hidden", help="comma-separated hidden widths, e.g. 256,256")
    t.add_argument("--init-confidence", type=float)
    t.add_argument("--confidence-lr-scale", type=float)
    t.add_argument("--epsilon", type=float)
    t.add_argument("--beta", type=float)
    t.add_argument("--gce-q", type=float)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("report", help="rank instances and export confidence densities")
    r.add_argument("run_dir", nargs="?")
    r.add_argument("--out", help="run directory (alternative to the positional argument)")
    r.add_argument("--top-k", type=int, default=32)
    r.add_argument("--grid-size", type=int, default=GRID_SIZE)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except TrainingFault as exc:
        print(f"iceconf: training fault: {exc}", file=sys.stderr)
        return 1
    except (OSError, ConfigError, InvalidInputError, FormatError, KeyError, ValueError) as exc:
        print(f"iceconf: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points: train a model, export predictions.

Predictions are written in the shared tensor container layout, so the
dataset tooling's `eval` command can score them directly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from .data import load_manifest
from .model import NetworkConfig
from .tensorio import ContainerError
from .train import TrainConfig, load_checkpoint, predict, train

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

_SPLITS = ("train", "test", "all")


def _network_config(profile: str, overrides: dict) -> NetworkConfig:
    clean = {k: tuple(v) if isinstance(v, list) else v
             for k, v in overrides.items()}
    return NetworkConfig.named(profile, **clean)


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = set(doc) - {"network", "train"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    return doc


def _cmd_train(args) -> int:
    doc = _load_config_file(args.config) if args.config else {}
    overrides = dict(doc.get("train", {}))
    for key in ("lr", "batch_size", "epochs", "seed", "device"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    train_config = TrainConfig(**overrides)
    net_config = _network_config(args.profile, doc.get("network", {}))

    manifest = load_manifest(args.manifest)
    dataset_dir = os.path.dirname(os.path.abspath(args.manifest))
    progress = None
    if not args.quiet:
        progress = lambda row: print(
            f"epoch {row['epoch']:4d}  train {row['train_loss']:.4f}  "
            f"test {row['test_loss']:.4f}", flush=True)
    result = train(manifest, dataset_dir, net_config, train_config, args.out,
                   train_split=args.train_split, test_split=args.test_split,
                   progress=progress)
    print(json.dumps({"checkpoint": result["checkpoint"],
                      "best_epoch": result["best_epoch"],
                      "best_test_loss": result["best_test_loss"],
                      "epochs": len(result["history"]),
                      "network": asdict(net_config)}))
    return EXIT_OK


def _cmd_predict(args) -> int:
    manifest = load_manifest(args.manifest)
    dataset_dir = os.path.dirname(os.path.abspath(args.manifest))
    model, _ = load_checkpoint(args.checkpoint, device=args.device or "cpu")
    written = predict(model, manifest, dataset_dir, args.out,
                      split=args.split)
    print(json.dumps({"n_predictions": len(written), "out": args.out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psd2imagenet",
        description="neural contour reconstruction from power tensors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a dataset")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--profile", choices=("desk", "full"), default="desk")
    p.add_argument("--config", help="JSON file with network/train overrides")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--device", default=None)
    p.add_argument("--train-split", choices=_SPLITS, default="train")
    p.add_argument("--test-split", choices=_SPLITS, default="test")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="write prediction images")
    p.add_argument("--manifest", required=True, help="dataset manifest path")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--out", required=True, help="prediction directory")
    p.add_argument("--split", choices=_SPLITS, default="test")
    p.add_argument("--device", default=None)
    p.set_defaults(func=_cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ContainerError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

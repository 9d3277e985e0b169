"""Command-line interface.

Subcommands cover the full workflow: schedule export, single-scene
simulation, dataset generation, empty-scene baselines, reconstruction, and
metric evaluation. Exit codes: 0 on success, 2 for configuration or
validation problems, 3 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import Config, ConfigError, load_config, make_config
from .dataset import (DatasetManifest, MANIFEST_NAME, complex_to_channels,
                      evaluate_run, gen_dataset, load_sample_measurement,
                      measurement_to_array)
from .forward import NoiseModel, capture_measurement, empty_baseline
from .illumination import schedule_to_json
from .inversion import DEFAULT_CGLS_LAMBDA, reconstruct_batch
from .metrics import DEFAULT_METRICS, MetricConfig
from .scene import rasterize_phantom, render_ground_truth, sample_random_humanoid
from .tensorio import TensorFormatError, write_pgm, write_tensor_atomic

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

METHODS = ("mf", "cgls", "art", "fused")


def _config_from_args(args) -> Config:
    if args.config is not None:
        return load_config(args.config)
    return make_config({})


def _cmd_patterns(args) -> int:
    config = _config_from_args(args)
    text = schedule_to_json(config.schedule())
    if args.out is None:
        print(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote schedule to {args.out}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    layout = config.layout()
    schedule = config.schedule()
    waveform = config.waveform()
    phantom = sample_random_humanoid(args.phantom_seed)
    scene = rasterize_phantom(phantom, layout.soi)
    noise = config.noise_model()
    if args.noise_seed is not None:
        snr = config.snr_db if noise is not None else 30.0
        noise = NoiseModel(snr_db=snr, seed=args.noise_seed, enabled=True)
    meas = capture_measurement(layout, scene, schedule, waveform, noise)
    write_tensor_atomic(args.out, meas.psd())
    print(f"wrote power tensor {meas.psd().shape} to {args.out}")
    if args.meas_out is not None:
        write_tensor_atomic(args.meas_out, measurement_to_array(meas))
        print(f"wrote complex spectra to {args.meas_out}")
    if args.shadow_out is not None:
        write_tensor_atomic(args.shadow_out, complex_to_channels(meas.shadow))
        print(f"wrote shadow-channel spectra to {args.shadow_out}")
    if args.gt_out is not None:
        gt = render_ground_truth(phantom, width=config.image_width,
                                 height=config.image_height)
        write_tensor_atomic(args.gt_out, gt)
        print(f"wrote ground truth to {args.gt_out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    config = _config_from_args(args)
    meas = empty_baseline(config.layout(), config.schedule(), config.waveform())
    write_tensor_atomic(args.out, measurement_to_array(meas))
    print(f"wrote empty-scene spectra to {args.out}")
    return EXIT_OK


def _cmd_gen_dataset(args) -> int:
    config = _config_from_args(args)
    manifest = gen_dataset(config, n_samples=args.n, out_dir=args.out,
                           base_seed=args.seed, progress=not args.quiet)
    n_test = len(manifest.split("test"))
    print(f"dataset ready: {len(manifest.samples)} samples "
          f"({len(manifest.samples) - n_test} train / {n_test} test) "
          f"in {args.out}")
    return EXIT_OK


def _load_manifest(path: str) -> tuple[DatasetManifest, str]:
    path = str(path)
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    try:
        manifest = DatasetManifest.load(path)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid manifest {path}: {exc}") from exc
    return manifest, os.path.dirname(os.path.abspath(path))


def _cmd_invert(args) -> int:
    manifest, dataset_dir = _load_manifest(args.manifest)
    config = make_config(manifest.config)
    layout = config.layout()
    schedule = config.schedule()
    waveform = config.waveform()
    samples = manifest.split(args.split)
    if not samples:
        raise ConfigError(f"no samples in split {args.split!r}")
    baseline = empty_baseline(layout, schedule, waveform)
    os.makedirs(args.out, exist_ok=True)
    measurements = [load_sample_measurement(dataset_dir, s) for s in samples]
    solver_iters = {}
    if args.iters is not None:
        if args.method in ("cgls", "fused"):
            solver_iters["cgls_iters"] = args.iters
        if args.method in ("art", "fused"):
            solver_iters["art_iters"] = args.iters
    images = reconstruct_batch(
        layout, schedule, waveform, measurements, baseline,
        method=args.method, width=config.image_width,
        height=config.image_height, lam=args.lam,
        report=lambda stats: print(json.dumps(stats)), **solver_iters)
    for sample, result in zip(samples, images):
        out_path = os.path.join(args.out, f"{sample['id']}.pred.drm")
        write_tensor_atomic(out_path, result.image)
        if args.pgm:
            write_pgm(os.path.join(args.out, f"{sample['id']}.pred.pgm"),
                      result.image)
    print(f"wrote {len(images)} {args.method} predictions to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest, dataset_dir = _load_manifest(args.manifest)
    metric_config = DEFAULT_METRICS
    if args.threshold != DEFAULT_METRICS.threshold:
        metric_config = MetricConfig(threshold=args.threshold)
    report = evaluate_run(manifest, dataset_dir, args.pred, split=args.split,
                          config=metric_config)
    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
        print(f"wrote report to {args.out}")
    print(f"split={report['split']} evaluated={report['n_evaluated']} "
          f"missing={len(report['missing'])}")
    for key, value in report["mean"].items():
        shown = "n/a" if value is None else f"{value:.6f}"
        print(f"mean {key}: {shown}")
    if report["missing"]:
        print("missing predictions: " + ", ".join(report["missing"]),
              file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duoris",
        description="Dual reflective-surface imaging toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="JSON configuration file "
                       "(defaults to the desk profile)")

    p = sub.add_parser("patterns", help="export the illumination schedule")
    add_config(p)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=_cmd_patterns)

    p = sub.add_parser("simulate", help="simulate one random humanoid scene")
    add_config(p)
    p.add_argument("--phantom-seed", type=int, required=True)
    p.add_argument("--noise-seed", type=int,
                   help="enable noise with this seed, overriding the config")
    p.add_argument("--out", required=True, help="power tensor output path")
    p.add_argument("--meas-out", help="complex spectra output path")
    p.add_argument("--shadow-out", help="shadow-channel spectra output path")
    p.add_argument("--gt-out", help="ground-truth image output path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("baseline", help="write the empty-scene spectra")
    add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("gen-dataset", help="generate a labelled dataset")
    add_config(p)
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0, help="base phantom seed")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("invert", help="reconstruct images for a dataset")
    p.add_argument("--manifest", required=True,
                   help="dataset manifest (or dataset directory)")
    p.add_argument("--method", choices=METHODS, default="fused")
    p.add_argument("--lambda", dest="lam", type=float,
                   default=DEFAULT_CGLS_LAMBDA,
                   help="regularization weight for cgls/fused")
    p.add_argument("--iters", type=int, default=None,
                   help="iteration budget for the selected solver(s); "
                        "per-solver defaults when omitted")
    p.add_argument("--split", choices=("train", "test", "all"),
                   default="test")
    p.add_argument("--out", required=True, help="prediction directory")
    p.add_argument("--pgm", action="store_true",
                   help="also write 8-bit preview images")
    p.set_defaults(func=_cmd_invert)

    p = sub.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--manifest", required=True,
                   help="dataset manifest (or dataset directory)")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--split", choices=("train", "test", "all"),
                   default="test")
    p.add_argument("--threshold", type=float,
                   default=DEFAULT_METRICS.threshold)
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TensorFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

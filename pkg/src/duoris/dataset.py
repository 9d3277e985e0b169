"""Synthetic dataset generation, manifests, and run evaluation.

A dataset is a directory of per-sample tensor files plus a manifest. Each
sample holds the power tensor, the raw complex spectra (stored as a
real/imaginary float32 pair so classical inversion can run from disk), and
the binary ground-truth image. Generation is deterministic per
(config, base seed), resumable (finished samples are skipped by parameter
hash), and writes through atomic renames.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .forward import Measurement, NoiseModel, capture_measurement, empty_baseline
from .hashing import content_hash
from .metrics import DEFAULT_METRICS, ImagePair, MetricConfig, all_metrics
from .scene import render_ground_truth, rasterize_phantom, sample_random_humanoid
from .tensorio import read_tensor, write_tensor_atomic

MANIFEST_NAME = "manifest.json"
TEST_FRACTION = 0.2


def sample_stem(index: int) -> str:
    return f"sample_{index:05d}"


def complex_to_channels(values: np.ndarray) -> np.ndarray:
    """Stack a complex array into a (2 re/im, ...) float32 tensor."""
    values = np.asarray(values)
    return np.stack([values.real, values.imag]).astype(np.float32)


def channels_to_complex(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim < 2 or arr.shape[0] != 2:
        raise ValueError("expected a (2 re/im, ...) channel tensor")
    return arr[0] + 1j * arr[1]


def measurement_to_array(meas: Measurement) -> np.ndarray:
    """(2 receivers, 2 re/im, entries, bins) float32 view of the spectra."""
    stack = np.stack([meas.reflection, meas.transmission])
    return np.stack([stack.real, stack.imag], axis=1).astype(np.float32)


def measurement_from_array(arr: np.ndarray,
                           shadow_arr: np.ndarray | None = None) -> Measurement:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 4 or arr.shape[0] != 2 or arr.shape[1] != 2:
        raise ValueError("expected a (2, 2, entries, bins) spectra tensor")
    shadow = None if shadow_arr is None else channels_to_complex(shadow_arr)
    return Measurement(arr[0, 0] + 1j * arr[0, 1], arr[1, 0] + 1j * arr[1, 1],
                       shadow)


def split_assignments(phantom_seeds) -> list[str]:
    """Deterministic train/test split by seed hash rank.

    The `TEST_FRACTION` samples with the highest seed digests become the
    test split, so the proportion is exact regardless of seed values.
    """
    seeds = list(phantom_seeds)
    n_test = round(TEST_FRACTION * len(seeds))
    order = sorted(range(len(seeds)),
                   key=lambda i: (content_hash({"phantom_seed": seeds[i]}), i),
                   reverse=True)
    test_idx = set(order[:n_test])
    return ["test" if i in test_idx else "train" for i in range(len(seeds))]


def derive_noise_seed(base_seed: int, index: int) -> int:
    digest = content_hash({"noise_stream": [base_seed, index]})
    return int(digest[:15], 16)


@dataclass
class DatasetManifest:
    config: dict
    base_seed: int
    layout_hash: str
    schedule_seed: int
    samples: list = field(default_factory=list)

    def save(self, path) -> None:
        doc = {"format": "duoris-dataset", "version": 1,
               "config": self.config, "base_seed": self.base_seed,
               "layout_hash": self.layout_hash,
               "schedule_seed": self.schedule_seed, "samples": self.samples}
        tmp = f"{path}.tmp.{os.getpid()}"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != "duoris-dataset":
            raise ValueError("not a dataset manifest")
        manifest = cls(config=doc["config"], base_seed=doc["base_seed"],
                       layout_hash=doc["layout_hash"],
                       schedule_seed=doc["schedule_seed"],
                       samples=doc["samples"])
        base = os.path.dirname(os.path.abspath(str(path)))
        missing = [s[key] for s in manifest.samples
                   for key in ("psd_path", "meas_path", "shadow_path",
                               "gt_path")
                   if not os.path.exists(os.path.join(base, s[key]))]
        if missing:
            raise ValueError("manifest references missing files: "
                             + ", ".join(missing[:5])
                             + ("..." if len(missing) > 5 else ""))
        return manifest

    def split(self, name: str) -> list[dict]:
        if name == "all":
            return list(self.samples)
        return [s for s in self.samples if s["split"] == name]


def _sample_params_hash(config: Config, phantom_seed: int, noise_seed: int) -> str:
    return content_hash({"config": config.to_dict(),
                         "phantom_seed": phantom_seed,
                         "noise_seed": noise_seed})


def _generate_sample(config: Config, layout, schedule, waveform,
                     phantom_seed: int, noise_seed: int, out_dir: str,
                     stem: str) -> str:
    phantom = sample_random_humanoid(phantom_seed)
    scene = rasterize_phantom(phantom, layout.soi)
    noise = None
    if config.noise_enabled:
        noise = NoiseModel(snr_db=config.snr_db, seed=noise_seed, enabled=True)
    meas = capture_measurement(layout, scene, schedule, waveform, noise)
    gt = render_ground_truth(phantom, width=config.image_width,
                             height=config.image_height)
    write_tensor_atomic(os.path.join(out_dir, f"{stem}.psd.drm"), meas.psd())
    write_tensor_atomic(os.path.join(out_dir, f"{stem}.meas.drm"),
                        measurement_to_array(meas))
    write_tensor_atomic(os.path.join(out_dir, f"{stem}.shadow.drm"),
                        complex_to_channels(meas.shadow))
    write_tensor_atomic(os.path.join(out_dir, f"{stem}.gt.drm"), gt)
    return phantom.pose_family


def gen_dataset(config: Config, n_samples: int, out_dir,
                base_seed: int = 0, progress: bool = False) -> DatasetManifest:
    """Generate (or resume) a dataset of humanoid scenes.

    Sample k uses phantom seed base_seed + k and its own derived noise
    stream. Samples whose files and parameter hash already match on disk
    are skipped, so an interrupted run can be re-issued unchanged.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    layout = config.layout()
    schedule = config.schedule()
    waveform = config.waveform()
    if config.noise_enabled:
        empty_baseline(layout, schedule, waveform)  # warm the shared cache

    seeds = [base_seed + k for k in range(n_samples)]
    splits = split_assignments(seeds)
    samples = []
    layout_hash = layout.content_hash()
    for k, phantom_seed in enumerate(seeds):
        stem = sample_stem(k)
        noise_seed = derive_noise_seed(base_seed, k)
        params_hash = _sample_params_hash(config, phantom_seed, noise_seed)
        meta_path = os.path.join(out_dir, f"{stem}.meta.json")
        pose_family = None
        if os.path.exists(meta_path):
            try:
                with open(meta_path, "r", encoding="utf-8") as fh:
                    meta = json.load(fh)
                if meta.get("params_hash") == params_hash and all(
                        os.path.exists(os.path.join(out_dir, f"{stem}.{ext}.drm"))
                        for ext in ("psd", "meas", "shadow", "gt")):
                    pose_family = meta["pose_family"]
            except (OSError, json.JSONDecodeError, KeyError):
                pose_family = None
        if pose_family is None:
            pose_family = _generate_sample(config, layout, schedule, waveform,
                                           phantom_seed, noise_seed, out_dir,
                                           stem)
            tmp = f"{meta_path}.tmp.{os.getpid()}"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump({"params_hash": params_hash,
                           "pose_family": pose_family}, fh)
            os.replace(tmp, meta_path)
            if progress:
                print(f"generated {stem} ({k + 1}/{n_samples})", flush=True)
        elif progress:
            print(f"kept {stem} ({k + 1}/{n_samples})", flush=True)
        samples.append({
            "id": stem,
            "psd_path": f"{stem}.psd.drm",
            "meas_path": f"{stem}.meas.drm",
            "shadow_path": f"{stem}.shadow.drm",
            "gt_path": f"{stem}.gt.drm",
            "phantom_seed": phantom_seed,
            "pose_family": pose_family,
            "snr_db": config.snr_db if config.noise_enabled else None,
            "layout_hash": layout_hash,
            "schedule_seed": config.schedule_seed,
            "split": splits[k],
        })
    manifest = DatasetManifest(config=config.to_dict(), base_seed=base_seed,
                               layout_hash=layout_hash,
                               schedule_seed=config.schedule_seed,
                               samples=samples)
    manifest.save(os.path.join(out_dir, MANIFEST_NAME))
    return manifest


def load_sample_measurement(dataset_dir, sample: dict) -> Measurement:
    """Rebuild the complex capture of one manifest sample from disk."""
    base = str(dataset_dir)
    arr = read_tensor(os.path.join(base, sample["meas_path"]))
    shadow = read_tensor(os.path.join(base, sample["shadow_path"]))
    return measurement_from_array(arr, shadow)


def evaluate_run(manifest: DatasetManifest, dataset_dir, predictions_dir,
                 split: str = "test",
                 config: MetricConfig = DEFAULT_METRICS) -> dict:
    """Score prediction tensors against ground truth for one split.

    Predictions are `<sample id>.pred.drm` files. Missing predictions are
    reported and excluded from the means.
    """
    selected = manifest.split(split)
    if not selected:
        raise ValueError(f"no samples in split {split!r}")
    rows, missing = [], []
    for s in selected:
        pred_path = os.path.join(str(predictions_dir), f"{s['id']}.pred.drm")
        if not os.path.exists(pred_path):
            missing.append(s["id"])
            continue
        gt = read_tensor(os.path.join(str(dataset_dir), s["gt_path"]))
        pred = read_tensor(pred_path)
        pair = ImagePair(pred=pred, gt=gt)
        row = {"id": s["id"], **all_metrics(pair, config)}
        rows.append(row)
    keys = ("ssim", "mae", "f_measure", "bce", "iou", "loss")
    mean = {k: (float(np.mean([r[k] for r in rows])) if rows else None)
            for k in keys}
    return {"split": split, "n_evaluated": len(rows), "missing": missing,
            "per_sample": rows, "mean": mean}

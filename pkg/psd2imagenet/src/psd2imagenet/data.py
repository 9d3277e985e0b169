"""Dataset manifests and sample loading.

A dataset directory holds per-sample tensor containers plus a JSON
manifest listing the samples, their file names, and their train/test
split. Only the power tensor and the ground-truth image are consumed
here; the raw spectra files are for classical solvers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from .tensorio import read_tensor

MANIFEST_FORMAT = "duoris-dataset"
_SAMPLE_KEYS = ("id", "psd_path", "gt_path", "split")


@dataclass(frozen=True)
class Manifest:
    """Parsed dataset manifest: generation config plus the sample table."""

    config: dict
    base_seed: int
    samples: tuple

    def split(self, name: str) -> list[dict]:
        if name == "all":
            return list(self.samples)
        return [s for s in self.samples if s["split"] == name]


def load_manifest(path) -> Manifest:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValueError("not a dataset manifest")
    samples = doc.get("samples", [])
    for sample in samples:
        missing = [k for k in _SAMPLE_KEYS if k not in sample]
        if missing:
            raise ValueError(f"manifest sample missing keys {missing}")
    return Manifest(config=doc.get("config", {}),
                    base_seed=doc.get("base_seed", 0),
                    samples=tuple(samples))


def normalize_psd(psd: np.ndarray) -> np.ndarray:
    """Log-scale a power tensor and standardize it per sample.

    Raw power values span many decades and carry an arbitrary absolute
    scale; the network only needs the relative structure.
    """
    x = np.log10(np.asarray(psd, dtype=np.float32) + 1e-30)
    return (x - x.mean()) / (x.std() + 1e-6)


class PsdPairs(torch.utils.data.Dataset):
    """(power tensor, ground truth, sample id) triples from a dataset dir."""

    def __init__(self, dataset_dir, samples):
        self.dataset_dir = str(dataset_dir)
        self.samples = list(samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int):
        sample = self.samples[index]
        psd = read_tensor(os.path.join(self.dataset_dir, sample["psd_path"]))
        gt = read_tensor(os.path.join(self.dataset_dir, sample["gt_path"]))
        return (torch.from_numpy(normalize_psd(psd)),
                torch.from_numpy(gt.astype(np.float32)),
                sample["id"])

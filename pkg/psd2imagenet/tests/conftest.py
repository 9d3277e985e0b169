"""Shared fixtures: one bench-scale dataset generated through the
dataset-tooling CLI, reused by every test that needs real samples."""

import json
import subprocess
import sys

import pytest

from psd2imagenet.data import load_manifest

N_SAMPLES = 200
BASE_SEED = 0


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_data")
    proc = subprocess.run(
        [sys.executable, "-m", "duoris", "gen-dataset", "--out", str(out),
         "--n", str(N_SAMPLES), "--seed", str(BASE_SEED), "--quiet"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture(scope="session")
def manifest(dataset_dir):
    return load_manifest(dataset_dir / "manifest.json")


@pytest.fixture(scope="session")
def mini_manifest_path(dataset_dir, tmp_path_factory):
    """A 12-sample manifest view over the same files: 10 train, 2 test."""
    with open(dataset_dir / "manifest.json", "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    doc["samples"] = doc["samples"][:12]
    for k, sample in enumerate(doc["samples"]):
        sample["split"] = "train" if k < 10 else "test"
    path = dataset_dir / "mini.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path

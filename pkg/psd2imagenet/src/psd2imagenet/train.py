"""Training loop, checkpointing, and prediction export."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import Manifest, PsdPairs
from .metrics import mae, reconstruction_loss, ssim
from .model import NetworkConfig, Psd2ImageNet
from .tensorio import write_tensor_atomic

CHECKPOINT_FORMAT = "psd2imagenet-checkpoint"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings (adaptive-moment optimizer)."""

    lr: float = 1e-2
    beta1: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.epochs < 1:
            raise ValueError("need at least one epoch")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


def _resolve_device(name: str) -> torch.device:
    device = torch.device(name)
    if device.type == "cuda" and not torch.cuda.is_available():
        raise RuntimeError("CUDA device requested but not available")
    return device


def batch_loss_terms(model, loader, device) -> tuple[float, float, int]:
    """Sum of per-image (1 - SSIM + MAE) and SSIM over a loader, with count."""
    loss_sum, ssim_sum, count = 0.0, 0.0, 0
    model.eval()
    with torch.no_grad():
        for psd, gt, _ in loader:
            pred = model(psd.to(device))
            gt = gt.to(device)
            s = ssim(pred, gt)
            loss_sum += float((1.0 - s + mae(pred, gt)).sum())
            ssim_sum += float(s.sum())
            count += int(gt.shape[0])
    return loss_sum, ssim_sum, count


def evaluate_loss(model, loader, device) -> float:
    """Mean per-image loss in eval mode (dropout off, running norm stats)."""
    loss_sum, _, count = batch_loss_terms(model, loader, device)
    return loss_sum / count


def train(manifest: Manifest, dataset_dir, net_config: NetworkConfig,
          train_config: TrainConfig, out_dir, train_split: str = "train",
          test_split: str = "test", progress=None) -> dict:
    """Fit a network on one dataset split and checkpoint on another.

    Minimizes 1 - SSIM + MAE with Adam. Logs per-epoch train loss (running
    mean over optimization batches) and test loss (eval mode), and keeps
    the checkpoint of the best test loss; writes are atomic. `progress` is
    an optional per-epoch callback receiving the history row.
    """
    train_samples = manifest.split(train_split)
    test_samples = manifest.split(test_split)
    if not train_samples:
        raise ValueError(f"split {train_split!r} has no samples")
    if not test_samples:
        raise ValueError(f"split {test_split!r} has no samples")
    device = _resolve_device(train_config.device)
    os.makedirs(str(out_dir), exist_ok=True)

    torch.manual_seed(train_config.seed)
    model = Psd2ImageNet(net_config).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.lr,
                                 betas=(train_config.beta1, 0.999),
                                 weight_decay=train_config.weight_decay)
    loader = DataLoader(PsdPairs(dataset_dir, train_samples),
                        batch_size=train_config.batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(
                            train_config.seed))
    test_loader = DataLoader(PsdPairs(dataset_dir, test_samples),
                             batch_size=train_config.batch_size)

    checkpoint_path = os.path.join(str(out_dir), "model.pt")
    history = []
    best_loss, best_epoch = float("inf"), -1
    for epoch in range(train_config.epochs):
        model.train()
        loss_sum, seen = 0.0, 0
        for psd, gt, _ in loader:
            psd, gt = psd.to(device), gt.to(device)
            loss = reconstruction_loss(model(psd), gt)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += float(loss.detach()) * int(gt.shape[0])
            seen += int(gt.shape[0])
        test_loss = evaluate_loss(model, test_loader, device)
        row = {"epoch": epoch, "train_loss": loss_sum / seen,
               "test_loss": test_loss}
        history.append(row)
        if test_loss < best_loss:
            best_loss, best_epoch = test_loss, epoch
            _save_checkpoint(checkpoint_path, model, net_config, train_config,
                             epoch, test_loss, history)
        if progress is not None:
            progress(row)
    return {"history": history, "checkpoint": checkpoint_path,
            "best_test_loss": best_loss, "best_epoch": best_epoch}


def _save_checkpoint(path, model, net_config, train_config, epoch, test_loss,
                     history) -> None:
    doc = {"format": CHECKPOINT_FORMAT, "version": 1,
           "model_state": model.state_dict(),
           "network": asdict(net_config), "train": asdict(train_config),
           "epoch": epoch, "test_loss": test_loss, "history": list(history)}
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        torch.save(doc, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path, device: str = "cpu"):
    """Rebuild the model from a checkpoint; returns (model, document)."""
    doc = torch.load(path, map_location=device, weights_only=True)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    config = NetworkConfig(**{k: tuple(v) if isinstance(v, list) else v
                              for k, v in doc["network"].items()})
    model = Psd2ImageNet(config).to(_resolve_device(device))
    model.load_state_dict(doc["model_state"])
    model.eval()
    return model, doc


def predict(model, manifest: Manifest, dataset_dir, out_dir,
            split: str = "test", batch_size: int = 8,
            device: str = "cpu") -> list[str]:
    """Write `<sample id>.pred.drm` images for one split; returns the ids."""
    samples = manifest.split(split)
    if not samples:
        raise ValueError(f"split {split!r} has no samples")
    dev = _resolve_device(device)
    os.makedirs(str(out_dir), exist_ok=True)
    loader = DataLoader(PsdPairs(dataset_dir, samples),
                        batch_size=batch_size)
    model.eval()
    written = []
    with torch.no_grad():
        for psd, _, ids in loader:
            pred = model(psd.to(dev)).cpu().numpy().astype(np.float32)
            for image, sample_id in zip(pred, ids):
                write_tensor_atomic(
                    os.path.join(str(out_dir), f"{sample_id}.pred.drm"),
                    image)
                written.append(sample_id)
    return written

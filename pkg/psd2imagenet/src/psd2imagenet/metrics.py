"""Differentiable image metrics.

These mirror the evaluation formulas used by the dataset tooling: the
structural similarity is the global single-window form, with one set of
population statistics over the whole image, so constant images have
well-defined scores. Predictions are clamped into [0, 1] before scoring,
matching the evaluator.
"""

from __future__ import annotations

import torch

C1 = (0.01 * 1.0) ** 2
C2 = (0.03 * 1.0) ** 2


def ssim(pred: torch.Tensor, gt: torch.Tensor,
         c1: float = C1, c2: float = C2) -> torch.Tensor:
    """Per-image structural similarity over the two trailing axes."""
    p = pred.clamp(0.0, 1.0)
    mp = p.mean(dim=(-2, -1), keepdim=True)
    mg = gt.mean(dim=(-2, -1), keepdim=True)
    dp = p - mp
    dg = gt - mg
    vp = dp.pow(2).mean(dim=(-2, -1))
    vg = dg.pow(2).mean(dim=(-2, -1))
    cov = (dp * dg).mean(dim=(-2, -1))
    mp = mp.squeeze(-1).squeeze(-1)
    mg = mg.squeeze(-1).squeeze(-1)
    num = (2.0 * mp * mg + c1) * (2.0 * cov + c2)
    den = (mp.pow(2) + mg.pow(2) + c1) * (vp + vg + c2)
    return num / den


def mae(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Per-image mean absolute error over the two trailing axes."""
    return (pred.clamp(0.0, 1.0) - gt).abs().mean(dim=(-2, -1))


def reconstruction_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Training objective 1 - SSIM + MAE, averaged over leading axes."""
    return (1.0 - ssim(pred, gt) + mae(pred, gt)).mean()

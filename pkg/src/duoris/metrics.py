"""Image quality metrics for reconstructed-vs-reference comparisons.

All metrics take a validated pair (prediction in [0, 1], binary ground
truth) and return floats. The structural similarity here is the global
single-window form: one set of population statistics over the whole image,
no sliding window, so constant images have well-defined scores. A windowed
variant exists for comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter


@dataclass(frozen=True)
class MetricConfig:
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    beta: float = 1.0
    threshold: float = 0.5
    eps: float = 1e-7
    window: int = 7  # windowed-variant size only

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


DEFAULT_METRICS = MetricConfig()


@dataclass(frozen=True)
class ImagePair:
    """Prediction/ground-truth pair with shared shape.

    The prediction is clamped into [0, 1] on construction; the ground truth
    must be strictly binary.
    """

    pred: np.ndarray
    gt: np.ndarray

    def __post_init__(self):
        pred = np.asarray(self.pred, dtype=float)
        gt = np.asarray(self.gt, dtype=float)
        if pred.shape != gt.shape:
            raise ValueError("prediction and ground truth shapes differ")
        if pred.size == 0:
            raise ValueError("empty images")
        if not np.all(np.isfinite(pred)):
            raise ValueError("prediction contains non-finite values")
        if not np.all((gt == 0.0) | (gt == 1.0)):
            raise ValueError("ground truth must be binary")
        object.__setattr__(self, "pred", np.clip(pred, 0.0, 1.0))
        object.__setattr__(self, "gt", gt)


def ssim(pair: ImagePair, config: MetricConfig = DEFAULT_METRICS,
         windowed: bool = False) -> float:
    """Structural similarity; global single-window unless `windowed`."""
    if windowed:
        return _ssim_windowed(pair, config)
    p, g = pair.pred, pair.gt
    mp, mg = p.mean(), g.mean()
    vp, vg = p.var(), g.var()
    cov = ((p - mp) * (g - mg)).mean()
    c1, c2 = config.c1, config.c2
    num = (2 * mp * mg + c1) * (2 * cov + c2)
    den = (mp**2 + mg**2 + c1) * (vp + vg + c2)
    return float(num / den)


def _ssim_windowed(pair: ImagePair, config: MetricConfig) -> float:
    p, g = pair.pred, pair.gt
    w = config.window
    mp = uniform_filter(p, w)
    mg = uniform_filter(g, w)
    vp = uniform_filter(p * p, w) - mp**2
    vg = uniform_filter(g * g, w) - mg**2
    cov = uniform_filter(p * g, w) - mp * mg
    c1, c2 = config.c1, config.c2
    s = ((2 * mp * mg + c1) * (2 * cov + c2)) \
        / ((mp**2 + mg**2 + c1) * (vp + vg + c2))
    return float(s.mean())


def mae(pair: ImagePair, config: MetricConfig = DEFAULT_METRICS) -> float:
    """Mean absolute error over all pixels."""
    return float(np.mean(np.abs(pair.pred - pair.gt)))


def f_measure(pair: ImagePair, config: MetricConfig = DEFAULT_METRICS) -> float:
    """F-beta of the prediction binarized at the configured threshold.

    Returns 0 when there are no true positives (this covers empty
    predictions, empty references, and disjoint masks alike).
    """
    hard = pair.pred >= config.threshold
    ref = pair.gt > 0
    tp = float(np.sum(hard & ref))
    if tp == 0:
        return 0.0
    precision = tp / np.sum(hard)
    recall = tp / np.sum(ref)
    b2 = config.beta**2
    return float((1 + b2) * precision * recall / (b2 * precision + recall))


def bce(pair: ImagePair, config: MetricConfig = DEFAULT_METRICS) -> float:
    """Binary cross-entropy summed over pixels, prediction clamped away
    from {0, 1} by `eps`."""
    p = np.clip(pair.pred, config.eps, 1.0 - config.eps)
    g = pair.gt
    return float(-np.sum(g * np.log(p) + (1.0 - g) * np.log(1.0 - p)))


def iou(pair: ImagePair, config: MetricConfig = DEFAULT_METRICS) -> float:
    """Soft intersection-over-union.

    sum(P*G) / sum(P + G - P*G); an empty prediction against an empty
    reference counts as a perfect match (1.0).
    """
    inter = float(np.sum(pair.pred * pair.gt))
    union = float(np.sum(pair.pred + pair.gt - pair.pred * pair.gt))
    if union == 0.0:
        return 1.0
    return inter / union


def loss(pair: ImagePair, config: MetricConfig = DEFAULT_METRICS) -> float:
    """Training objective: 1 - SSIM + MAE."""
    return 1.0 - ssim(pair, config) + mae(pair, config)


def all_metrics(pair: ImagePair,
                config: MetricConfig = DEFAULT_METRICS) -> dict:
    return {
        "ssim": ssim(pair, config),
        "mae": mae(pair, config),
        "f_measure": f_measure(pair, config),
        "bce": bce(pair, config),
        "iou": iou(pair, config),
        "loss": loss(pair, config),
    }

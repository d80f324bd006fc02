"""Segmentation metrics: confusion-matrix mIoU / pixel accuracy, boundary and
interior F-scores over a distance band, and cosine-similarity maps."""

from __future__ import annotations

import math

import numpy as np

from .config import MetricConfig
from .data import boundary_from_mask

UNDEFINED = math.nan


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, num_classes: int, ignore_label: int = 255,
                     region: np.ndarray | None = None) -> np.ndarray:
    """Counts with rows = ground truth, cols = prediction."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    keep = gt != ignore_label
    if region is not None:
        keep &= np.asarray(region, dtype=bool)
    g = gt[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    return np.bincount(g * num_classes + p, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def _check(cm: np.ndarray) -> None:
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")


def miou(cm: np.ndarray) -> float:
    """Mean IoU over classes present in ground truth or prediction."""
    _check(cm)
    tp = np.diag(cm).astype(np.float64)
    union = cm.sum(0) + cm.sum(1) - tp
    present = union > 0
    return float(np.mean(tp[present] / union[present]))


def pixacc(cm: np.ndarray) -> float:
    _check(cm)
    return float(np.trace(cm) / cm.sum())


def macro_f1(cm: np.ndarray) -> float:
    """Mean per-class 2TP / (2TP + FP + FN); NaN when the region was empty."""
    if cm.sum() == 0:
        return UNDEFINED
    tp = np.diag(cm).astype(np.float64)
    denom = cm.sum(0) + cm.sum(1)  # = 2TP + FP + FN
    present = denom > 0
    return float(np.mean(2 * tp[present] / denom[present]))


def band_radius(shape: tuple[int, int], threshold: float) -> int:
    h, w = shape
    return math.ceil(threshold * math.sqrt(h * h + w * w))


def boundary_band(mask: np.ndarray, threshold: float) -> np.ndarray:
    """Pixels within Chebyshev distance ceil(threshold * diagonal) of a class change."""
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    return boundary_from_mask(mask, band_radius(np.shape(mask), threshold)).astype(bool)


def region_confusions(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig) -> tuple[np.ndarray, np.ndarray]:
    """Confusion matrices restricted to the boundary band and to its complement."""
    band = boundary_band(gt, cfg.boundary_threshold)
    cm_band = confusion_matrix(pred, gt, cfg.num_classes, cfg.ignore_label, band)
    cm_inner = confusion_matrix(pred, gt, cfg.num_classes, cfg.ignore_label, ~band)
    return cm_band, cm_inner


def boundary_interior_fscores(pred: np.ndarray, gt: np.ndarray, cfg: MetricConfig) -> tuple[float, float]:
    cm_band, cm_inner = region_confusions(pred, gt, cfg)
    return macro_f1(cm_band), macro_f1(cm_inner)


def cosine_similarity_map(features: np.ndarray, ref: tuple[int, int]) -> np.ndarray:
    """Cosine between each position's C-vector and the one at ``ref``.

    Positions with a zero feature vector get similarity 0.
    """
    features = np.asarray(features, dtype=np.float64)
    y, x = ref
    r = features[:, y, x]
    rnorm = np.linalg.norm(r)
    if rnorm == 0:
        raise ValueError(f"reference feature at {ref} has zero norm")
    norms = np.linalg.norm(features, axis=0)
    dots = np.tensordot(r, features, axes=(0, 0))
    out = np.zeros_like(norms)
    nz = norms > 0
    out[nz] = dots[nz] / (norms[nz] * rnorm)
    out[y, x] = 1.0
    return np.clip(out, -1.0, 1.0)


class MetricAccumulator:
    """Adds per-image confusion matrices in call order."""

    def __init__(self, cfg: MetricConfig):
        self.cfg = cfg
        k = cfg.num_classes
        self.cm = np.zeros((k, k), dtype=np.int64)
        self.cm_band = np.zeros((k, k), dtype=np.int64)
        self.cm_inner = np.zeros((k, k), dtype=np.int64)

    def update(self, pred: np.ndarray, gt: np.ndarray) -> None:
        self.cm += confusion_matrix(pred, gt, self.cfg.num_classes, self.cfg.ignore_label)
        band, inner = region_confusions(pred, gt, self.cfg)
        self.cm_band += band
        self.cm_inner += inner

    def report(self) -> dict[str, float]:
        return {
            "miou": miou(self.cm),
            "pixacc": pixacc(self.cm),
            "f_boundary": macro_f1(self.cm_band),
            "f_interior": macro_f1(self.cm_inner),
        }

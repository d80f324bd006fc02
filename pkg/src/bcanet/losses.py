"""Training objectives: segmentation CE, boundary BCE, boundary-gated CE,
auxiliary CE and their weighted total."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import LossWeights
from .tensor import Tensor

EPS = 1e-7


def _batched(logits: Tensor, target: np.ndarray) -> tuple[Tensor, np.ndarray]:
    target = np.asarray(target)
    if logits.ndim == 3:
        logits = T.reshape(logits, (1, *logits.shape))
        target = target[None]
    if target.shape != (logits.shape[0], *logits.shape[2:]):
        raise ValueError(f"target shape {target.shape} does not match logits {logits.shape}")
    return logits, target


def _one_hot(target: np.ndarray, num_classes: int, select: np.ndarray) -> np.ndarray:
    """(N, C, H, W) indicator of the target class at selected pixels."""
    onehot = np.zeros((target.shape[0], num_classes, *target.shape[1:]))
    for c in range(num_classes):
        onehot[:, c] = (target == c) & select
    return onehot


def _masked_ce(logits: Tensor, target: np.ndarray, select: np.ndarray) -> Tensor:
    count = int(select.sum())
    logp = T.log_softmax(logits, axis=1)
    picked = T.sum(T.mul(logp, Tensor(_one_hot(target, logits.shape[1], select))))
    return T.scale(picked, -1.0 / count)


def cross_entropy_seg(logits: Tensor, target: np.ndarray, ignore_label: int = 255) -> Tensor:
    """Mean of -log softmax(logits)[target] over non-ignored pixels."""
    logits, target = _batched(logits, target)
    valid = target != ignore_label
    if not valid.any():
        raise ValueError("cross_entropy_seg: every pixel carries the ignore label")
    bad = valid & ((target < 0) | (target >= logits.shape[1]))
    if bad.any():
        raise ValueError(f"cross_entropy_seg: labels outside [0, {logits.shape[1]})")
    return _masked_ce(logits, target, valid)


def bce_boundary(pred: Tensor, target: np.ndarray, reduction: str = "mean") -> Tensor:
    """Binary cross-entropy of edge probabilities against a binary map.

    ``pred`` is clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"bce_boundary: shape mismatch {pred.shape} vs {target.shape}")
    p = T.clamp(pred, EPS, 1.0 - EPS)
    pos = T.mul(T.log(p), Tensor(target))
    neg = T.mul(T.log(T.sub(Tensor(np.ones(p.shape)), p)), Tensor(1.0 - target))
    total = T.sum(T.add(pos, neg))
    if reduction == "mean":
        return T.scale(total, -1.0 / target.size)
    if reduction == "sum":
        return T.scale(total, -1.0)
    raise ValueError(f"unknown reduction {reduction!r}")


def multiscale_boundary_loss(edge_maps: list[Tensor], target: np.ndarray, reduction: str = "mean") -> Tensor:
    """Average of :func:`bce_boundary` over the per-scale edge maps.

    ``edge_maps`` are (N, 1, H, W); ``target`` is (N, H, W) or (H, W).
    """
    target = np.asarray(target, dtype=np.float64)
    target = target.reshape(edge_maps[0].shape)
    terms = [bce_boundary(e, target, reduction) for e in edge_maps]
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.scale(total, 1.0 / len(terms))


def boundary_gate(edge_maps: list[Tensor]) -> np.ndarray:
    """Pixelwise max of the per-scale edge probabilities, as a plain (N, H, W) array.

    The coarse maps are blurred by upsampling and rarely pass the threshold, so a
    mean would select only a handful of pixels, and averaging the gated loss over
    a handful of pixels gives them huge per-pixel weight.
    """
    return np.max([e.data[:, 0] for e in edge_maps], axis=0)


def boundary_attention_loss(
    seg_logits: Tensor,
    target: np.ndarray,
    pred_boundary: np.ndarray,
    t: float = 0.8,
    ignore_label: int = 255,
) -> Tensor:
    """Cross-entropy over pixels whose predicted boundary probability exceeds ``t``.

    The gate is not differentiated. Returns an exact zero when nothing is selected.
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {t}")
    seg_logits, target = _batched(seg_logits, target)
    gate = np.asarray(pred_boundary).reshape(target.shape) > t
    select = gate & (target != ignore_label)
    if not select.any():
        return Tensor(np.array(0.0))
    return _masked_ce(seg_logits, target, select)


@dataclass
class LossBreakdown:
    l_seg: Tensor
    l_boundary: Tensor
    l_att: Tensor
    l_aux: Tensor
    total: Tensor

    TERMS = ("l_seg", "l_boundary", "l_att", "l_aux")

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k).item() for k in (*self.TERMS, "total")}


def total_loss(l_seg, l_boundary, l_att, l_aux, w: LossWeights) -> LossBreakdown:
    parts = {
        name: v if isinstance(v, Tensor) else Tensor(np.asarray(v, dtype=float))
        for name, v in zip(LossBreakdown.TERMS, (l_seg, l_boundary, l_att, l_aux))
    }
    for name, value in parts.items():
        if not math.isfinite(value.item()):
            raise FloatingPointError(f"non-finite loss term {name} = {value.item()}")
    weights = (w.lambda1, w.lambda2, w.lambda3, w.lambda4)
    total = None
    for (name, value), lam in zip(parts.items(), weights):
        term = T.scale(value, lam)
        total = term if total is None else T.add(total, term)
    return LossBreakdown(**parts, total=total)

"""Training loop, evaluation and checkpoint conversion."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import losses as L
from .checkpoint import Checkpoint
from .config import MODEL_KINDS, Config, dump_config, parse_config
from .data import dataset_split, load_split
from .metrics import MetricAccumulator
from .model import BCANet, ModelOutput
from .optim import OptimState, sgd_step
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "l_seg", "l_boundary", "l_att", "l_aux", "total", "val_miou", "lr")
METRICS = ("miou", "pixacc", "f_boundary", "f_interior")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainResult:
    final: Checkpoint
    best: Checkpoint
    log: list[dict] = field(default_factory=list)


def build_model(cfg: Config, kind: str) -> BCANet:
    return BCANet(cfg.model, cfg.scene.num_classes, kind, seed=cfg.train.seed)


def compute_losses(out: ModelOutput, masks: np.ndarray, boundaries: np.ndarray, cfg: Config) -> L.LossBreakdown:
    ignore = cfg.train.ignore_label
    l_seg = L.cross_entropy_seg(out.seg_logits, masks, ignore)
    l_aux = L.cross_entropy_seg(out.aux_logits, masks, ignore)
    if out.edge_maps:
        l_boundary = L.multiscale_boundary_loss(out.edge_maps, boundaries, cfg.loss.boundary_reduction)
        l_att = L.boundary_attention_loss(
            out.seg_logits, masks, L.boundary_gate(out.edge_maps), cfg.loss.att_threshold, ignore
        )
    else:
        l_boundary = l_att = 0.0
    return L.total_loss(l_seg, l_boundary, l_att, l_aux, cfg.loss)


def predict(model: BCANet, images: np.ndarray, batch_size: int = 25) -> np.ndarray:
    preds = []
    with no_grad():
        for s in range(0, len(images), batch_size):
            out = model(Tensor(images[s : s + batch_size]))
            preds.append(out.seg_logits.data.argmax(axis=1))
    return np.concatenate(preds) if preds else np.zeros((0,) + images.shape[2:], dtype=np.int64)


def evaluate_arrays(model: BCANet, images: np.ndarray, masks: np.ndarray, cfg: Config) -> dict[str, float]:
    acc = MetricAccumulator(cfg.metric_config())
    for pred, gt in zip(predict(model, images), masks):
        acc.update(pred, gt)
    return acc.report()


def make_checkpoint(model: BCANet, cfg: Config, state: OptimState, rng: np.random.Generator) -> Checkpoint:
    return Checkpoint(
        model_kind=model.kind,
        num_classes=model.num_classes,
        params=model.state_dict(),
        config_text=dump_config(cfg),
        iteration=state.iter,
        optim={
            "lr0": state.lr0,
            "momentum": state.momentum,
            "weight_decay": state.weight_decay,
            "power": state.power,
            "max_iter": state.max_iter,
        },
        momentum={k: v.copy() for k, v in state.buffers.items()},
        rng_state=rng.bit_generator.state,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[BCANet, Config]:
    cfg = parse_config(ckpt.config_text)
    model = BCANet(cfg.model, ckpt.num_classes, ckpt.model_kind, seed=cfg.train.seed)
    model.load_state_dict(ckpt.params)
    return model, cfg


def write_log_csv(rows: list[dict], path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, os.PathLike))
    f = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])
    finally:
        if own:
            f.close()


def train(
    cfg: Config,
    model_kind: str,
    out_dir: str | os.PathLike | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train ``model_kind`` on the synthetic train split.

    Logs per-epoch mean losses and validation mIoU, keeps the best-validation
    and final checkpoints and, with ``out_dir``, writes ``final.bcan``,
    ``best.bcan`` and ``train_log.csv`` there.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    cfg.validate()
    tc = cfg.train
    rng = np.random.default_rng(tc.seed)
    model = build_model(cfg, model_kind)
    state = OptimState(
        lr0=tc.lr0,
        momentum=tc.momentum,
        weight_decay=tc.weight_decay,
        power=tc.power,
        max_iter=tc.total_iters,
        buffers={k: np.zeros_like(p.data) for k, p in model.params.items()},
    )
    train_idx, val_idx = dataset_split(cfg.scene, tc.n_train, tc.n_val)
    images, masks, bounds = load_split(cfg.scene, train_idx)
    v_images, v_masks, _ = load_split(cfg.scene, val_idx)

    log: list[dict] = []
    best = make_checkpoint(model, cfg, state, rng)
    best_miou = -math.inf
    epoch = 0
    while state.iter < state.max_iter:
        epoch += 1
        order = rng.permutation(len(images))
        sums = dict.fromkeys(L.LossBreakdown.TERMS + ("total",), 0.0)
        nb = 0
        lr = state.lr
        for s in range(0, len(order), tc.batch_size):
            if state.iter >= state.max_iter:
                break
            idx = np.sort(order[s : s + tc.batch_size])
            model.zero_grad()
            out = model(Tensor(images[idx]))
            try:
                parts = compute_losses(out, masks[idx], bounds[idx], cfg)
            except FloatingPointError as exc:
                raise TrainingAborted(f"epoch {epoch}, iteration {state.iter}: {exc}") from exc
            parts.total.backward()
            lr = sgd_step(model.params, state)
            for k, v in parts.as_dict().items():
                sums[k] += v
            nb += 1
        val_miou = evaluate_arrays(model, v_images, v_masks, cfg)["miou"] if len(v_images) else math.nan
        row = {"epoch": epoch, **{k: v / max(nb, 1) for k, v in sums.items()}, "val_miou": val_miou, "lr": lr}
        log.append(row)
        logger.info("epoch %d total=%.4f val_miou=%.4f", epoch, row["total"], val_miou)
        if on_epoch is not None:
            on_epoch(row)
        if val_miou > best_miou:
            best_miou = val_miou
            best = make_checkpoint(model, cfg, state, rng)

    final = make_checkpoint(model, cfg, state, rng)
    if not log:
        best = final
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        final.save(out / "final.bcan")
        best.save(out / "best.bcan")
        write_log_csv(log, out / "train_log.csv")
    return TrainResult(final, best, log)


def evaluate(ckpt: Checkpoint, split: str = "val", cfg: Config | None = None) -> list[tuple[str, str, float]]:
    """Metric rows ``(split, metric, value)`` for the model in ``ckpt``."""
    model, ckpt_cfg = model_from_checkpoint(ckpt)
    cfg = cfg or ckpt_cfg
    if cfg.scene.num_classes != ckpt.num_classes:
        raise ValueError(
            f"checkpoint has {ckpt.num_classes} classes but config asks for {cfg.scene.num_classes}"
        )
    splits = [split] if isinstance(split, str) else list(split)
    train_idx, val_idx = dataset_split(cfg.scene, cfg.train.n_train, cfg.train.n_val)
    rows = []
    for name in splits:
        if name not in ("train", "val"):
            raise ValueError(f"unknown split {name!r}")
        images, masks, _ = load_split(cfg.scene, train_idx if name == "train" else val_idx)
        report = evaluate_arrays(model, images, masks, cfg)
        rows += [(name, m, report[m]) for m in METRICS]
    return rows


def metrics_csv(rows: list[tuple[str, str, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("split", "metric", "value"))
    for split, metric, value in rows:
        writer.writerow((split, metric, repr(float(value))))
    return buf.getvalue()

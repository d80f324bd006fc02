"""Export attention columns, feature-similarity maps, edge maps and predictions
for one image as PGM files, with the raw values alongside as CSV."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint
from .config import Config
from .data import generate_scene
from .metrics import cosine_similarity_map
from .model import attention_column
from .pnm import to_uint8, write_pgm
from .tensor import Tensor, no_grad
from .trainer import model_from_checkpoint

GRID_SCALE = 8  # attention grid stride relative to the input


def to_grid(ref: tuple[int, int], image_hw: tuple[int, int]) -> tuple[int, int]:
    """Map a full-resolution pixel to its attention-grid cell (floor division by 8)."""
    y, x = ref
    h, w = image_hw
    if not (0 <= y < h and 0 <= x < w):
        raise ValueError(f"reference {ref} lies outside the {h}x{w} image")
    return y // GRID_SCALE, x // GRID_SCALE


def minmax(values: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant map becomes all zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def write_map(out_dir: str, stem: str, values: np.ndarray) -> tuple[str, str]:
    """``stem.pgm`` (min-max normalized) and ``stem.csv`` (raw ``y,x,value`` rows)."""
    pgm = os.path.join(out_dir, f"{stem}.pgm")
    csv = os.path.join(out_dir, f"{stem}.csv")
    write_pgm(pgm, to_uint8(minmax(values)))
    h, w = values.shape
    lines = ["y,x,value"] + [f"{y},{x},{float(values[y, x])!r}" for y in range(h) for x in range(w)]
    with open(csv, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return pgm, csv


@dataclass
class Visualization:
    grid_ref: tuple[int, int]
    attention: np.ndarray | None  # grid-sized column of the attention matrix
    cosine: np.ndarray  # grid-sized similarity of D to the reference cell
    edge_maps: list[np.ndarray]  # full resolution
    prediction: np.ndarray  # full resolution labels
    files: list[str] = field(default_factory=list)


def compute(ckpt: Checkpoint, image: np.ndarray, ref: tuple[int, int]) -> Visualization:
    """All maps for one 3 x H x W image, without touching the filesystem."""
    model, _ = model_from_checkpoint(ckpt)
    gy, gx = to_grid(ref, image.shape[-2:])
    with no_grad():
        out = model(Tensor(image[None]))
    gh, gw = out.grid
    j = gy * gw + gx
    att = out.attention_matrix(0)
    column = attention_column(att, j) if att is not None else None
    cosine = cosine_similarity_map(out.features.data[0], (gy, gx))
    edges = [e.data[0, 0] for e in out.edge_maps]
    pred = out.seg_logits.data[0].argmax(axis=0)
    return Visualization((gy, gx), column, cosine, edges, pred)


def export(
    ckpt: Checkpoint, index: int, ref: tuple[int, int], out_dir: str, cfg: Config | None = None
) -> Visualization:
    """Write the maps for dataset image ``index`` to ``out_dir``.

    Models without a context module have no attention map; models without the
    boundary branch have no edge maps. Those files are simply not written.
    """
    if cfg is None:
        _, cfg = model_from_checkpoint(ckpt)
    sample = generate_scene(cfg.scene, index)
    vis = compute(ckpt, sample.image, ref)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    if vis.attention is not None:
        files += write_map(out_dir, "attention", vis.attention)
    files += write_map(out_dir, "cosine", vis.cosine)
    for s, e in enumerate(vis.edge_maps, 1):
        files += write_map(out_dir, f"edge{s}", e)
    pred_path = os.path.join(out_dir, "prediction.pgm")
    write_pgm(pred_path, vis.prediction)
    files.append(pred_path)
    ref_path = os.path.join(out_dir, "reference.csv")
    with open(ref_path, "w", newline="\n") as fh:
        fh.write("index,ref_y,ref_x,grid_y,grid_x,grid_scale\n")
        fh.write(f"{index},{ref[0]},{ref[1]},{vis.grid_ref[0]},{vis.grid_ref[1]},{GRID_SCALE}\n")
    files.append(ref_path)
    vis.files = files
    return vis

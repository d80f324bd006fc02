"""Procedural scenes of rectangles and ellipses with ambiguous interior patches,
plus exact boundary labels derived from the masks."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ConfigError, SceneConfig
from .pnm import write_pgm, write_ppm

# RGB cube corners pulled in from the faces so noise is not clipped one-sidedly
PALETTE = 0.15 + 0.7 * np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 1, 0],
        [1, 0, 1],
        [0, 1, 1],
        [1, 1, 1],
    ],
    dtype=np.float64,
)


@dataclass
class Shape:
    kind: str  # "rect" or "ellipse"
    label: int
    top: int
    left: int
    height: int
    width: int
    # optional interior patch painted with another class's colour
    patch: tuple[int, int, int, int] | None = None  # top, left, height, width
    patch_label: int | None = None

    def region(self, size: int) -> np.ndarray:
        yy, xx = np.mgrid[0:size, 0:size]
        if self.kind == "rect":
            return (yy >= self.top) & (yy < self.top + self.height) & (xx >= self.left) & (xx < self.left + self.width)
        cy = self.top + (self.height - 1) / 2
        cx = self.left + (self.width - 1) / 2
        ry, rx = self.height / 2, self.width / 2
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0

    def patch_region(self, size: int) -> np.ndarray:
        yy, xx = np.mgrid[0:size, 0:size]
        t, l, h, w = self.patch
        return (yy >= t) & (yy < t + h) & (xx >= l) & (xx < l + w)


@dataclass
class SegSample:
    image: np.ndarray  # 3 x H x W in [0, 1]
    mask: np.ndarray  # H x W int64 labels
    boundary: np.ndarray  # H x W uint8 in {0, 1}


def boundary_from_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Mark pixels with a differently labelled pixel within Chebyshev ``radius``.

    Positions outside the image are simply absent, so the border alone is not
    a boundary.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    mask = np.asarray(mask)
    h, w = mask.shape
    out = np.zeros((h, w), dtype=bool)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if (dy == 0 and dx == 0) or abs(dy) >= h or abs(dx) >= w:
                continue
            ys, yd = slice(max(dy, 0), h + min(dy, 0)), slice(max(-dy, 0), h + min(-dy, 0))
            xs, xd = slice(max(dx, 0), w + min(dx, 0)), slice(max(-dx, 0), w + min(-dx, 0))
            # out[p] |= mask[p] != mask[p + (dy, dx)]
            out[yd, xd] |= mask[yd, xd] != mask[ys, xs]
    return out.astype(np.uint8)


def render_scene(shapes: Sequence[Shape], cfg: SceneConfig, rng: np.random.Generator | None = None) -> SegSample:
    """Paint shapes in order (later ones occlude) and add Gaussian noise."""
    size = cfg.image_size
    mask = np.zeros((size, size), dtype=np.int64)
    color = np.zeros((size, size), dtype=np.int64)
    for shape in shapes:
        region = shape.region(size)
        mask[region] = shape.label
        color[region] = shape.label
        if shape.patch is not None:
            color[region & shape.patch_region(size)] = shape.patch_label
    image = PALETTE[color].transpose(2, 0, 1).copy()
    if rng is not None and cfg.noise_std > 0:
        image += rng.normal(0.0, cfg.noise_std, size=image.shape)
    np.clip(image, 0.0, 1.0, out=image)
    return SegSample(image, mask, boundary_from_mask(mask, cfg.boundary_radius))


def _sample_shape(cfg: SceneConfig, rng: np.random.Generator) -> Shape:
    size = cfg.image_size
    label = int(rng.integers(1, cfg.num_classes))
    kind = "rect" if rng.random() < 0.5 else "ellipse"
    h = int(rng.integers(size // 4, size // 2 + 1))
    w = int(rng.integers(size // 4, size // 2 + 1))
    top = int(rng.integers(0, size - h + 1))
    left = int(rng.integers(0, size - w + 1))
    shape = Shape(kind, label, top, left, h, w)
    if rng.random() < cfg.ambiguity_prob:
        # inscribed-rectangle fraction keeps ellipse patches inside the shape;
        # patch area stays below half the bounding box either way
        frac = 0.7 if kind == "rect" else 0.7 / np.sqrt(2)
        ph = max(2, int(rng.integers(int(h * frac * 0.5), int(h * frac) + 1)))
        pw = max(2, int(rng.integers(int(w * frac * 0.5), int(w * frac) + 1)))
        cy, cx = top + h // 2, left + w // 2
        pt = cy - ph // 2 + int(rng.integers(-(h - ph) // 8, (h - ph) // 8 + 1))
        pl = cx - pw // 2 + int(rng.integers(-(w - pw) // 8, (w - pw) // 8 + 1))
        others = [c for c in range(cfg.num_classes) if c != label]
        shape.patch = (pt, pl, ph, pw)
        shape.patch_label = int(rng.choice(others))
    return shape


def _scene_shapes(cfg: SceneConfig, index: int) -> tuple[list[Shape], np.random.Generator]:
    rng = np.random.default_rng([cfg.seed, index])
    n = int(rng.integers(cfg.shapes_min, cfg.shapes_max + 1))
    return [_sample_shape(cfg, rng) for _ in range(n)], rng


def scene_shapes(cfg: SceneConfig, index: int) -> list[Shape]:
    """The shapes (in painting order) behind ``generate_scene(cfg, index)``."""
    return _scene_shapes(cfg, index)[0]


def generate_scene(cfg: SceneConfig, index: int) -> SegSample:
    """Deterministic sample for ``(cfg.seed, index)``."""
    shapes, rng = _scene_shapes(cfg, index)
    return render_scene(shapes, cfg, rng)


def dataset_split(cfg: SceneConfig, n_train: int, n_val: int) -> tuple[range, range]:
    """Disjoint index ranges: train first, validation after."""
    if n_train < 0 or n_val < 0:
        raise ConfigError(f"split sizes must be nonnegative, got ({n_train}, {n_val})")
    return range(0, n_train), range(n_train, n_train + n_val)


def load_split(cfg: SceneConfig, indices: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked images (N,3,H,W), masks (N,H,W) and boundaries (N,H,W)."""
    samples = [generate_scene(cfg, i) for i in indices]
    size = cfg.image_size
    if not samples:
        return np.zeros((0, 3, size, size)), np.zeros((0, size, size), np.int64), np.zeros((0, size, size), np.uint8)
    return (
        np.stack([s.image for s in samples]),
        np.stack([s.mask for s in samples]),
        np.stack([s.boundary for s in samples]),
    )


MANIFEST_COLUMNS = ("split", "index", "image", "mask", "boundary")


def sample_filenames(split: str, index: int) -> tuple[str, str, str]:
    """Image, mask and boundary file names for one sample."""
    stem = f"{split}_{index}"
    return f"{stem}.ppm", f"{stem}.pgm", f"{stem}.boundary.pgm"


def write_dataset(cfg: SceneConfig, n_train: int, n_val: int, out_dir) -> list[tuple[str, ...]]:
    """Dump both splits as PPM/PGM files plus ``manifest.csv``; returns the manifest rows."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for split, indices in zip(("train", "val"), dataset_split(cfg, n_train, n_val)):
        for i in indices:
            s = generate_scene(cfg, i)
            names = sample_filenames(split, i)
            write_ppm(os.path.join(out_dir, names[0]), s.image)
            write_pgm(os.path.join(out_dir, names[1]), s.mask)
            write_pgm(os.path.join(out_dir, names[2]), s.boundary)
            rows.append((split, str(i), *names))
    lines = [",".join(MANIFEST_COLUMNS)] + [",".join(r) for r in rows]
    with open(os.path.join(out_dir, "manifest.csv"), "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return rows

"""Binary 8-bit PPM (P6) and PGM (P5) files."""

from __future__ import annotations

import os

import numpy as np


def _header(magic: bytes, h: int, w: int) -> bytes:
    return magic + f"\n{w} {h}\n255\n".encode("ascii")


def to_uint8(values: np.ndarray) -> np.ndarray:
    """[0, 1] floats to bytes by rounding; out-of-range values are clipped."""
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write a 3 x H x W image in [0, 1]."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected 3 x H x W image, got {image.shape}")
    _, h, w = image.shape
    data = to_uint8(image).transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(_header(b"P6", h, w) + data.tobytes())


def write_pgm(path: str | os.PathLike, gray: np.ndarray) -> None:
    """Write an H x W array of integers in [0, 255] verbatim."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"expected H x W array, got {gray.shape}")
    if gray.size and (gray.min() < 0 or gray.max() > 255):
        raise ValueError("PGM values must lie in [0, 255]")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(_header(b"P5", h, w) + gray.astype(np.uint8).tobytes())


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    """Read P5 (-> H x W) or P6 (-> H x W x 3) uint8 data."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1  # single whitespace byte before the raster
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"only 8-bit files are supported, maxval={maxval}")
    if magic == b"P5":
        shape = (h, w)
    elif magic == b"P6":
        shape = (h, w, 3)
    else:
        raise ValueError(f"unsupported magic {magic!r}")
    count = int(np.prod(shape))
    if len(raw) - pos != count:
        raise ValueError(f"raster holds {len(raw) - pos} bytes, expected {count}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=pos).reshape(shape)

"""Binary checkpoint format.

Layout::

    b"BCAN"                      magic
    u32 little-endian            format version
    u32 little-endian            manifest length in bytes
    manifest                     UTF-8 JSON (sorted keys)
    payload                      little-endian f64 arrays, back to back

The manifest lists every array as ``{"name", "shape", "offset"}`` with the
offset in bytes from the start of the payload, together with the model kind,
iteration, optimizer scalars, RNG state and the config text.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"BCAN"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_kind: str
    num_classes: int
    params: dict[str, np.ndarray]
    config_text: str
    iteration: int = 0
    optim: dict[str, float] = field(default_factory=dict)
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: dict = field(default_factory=dict)
    version: int = VERSION

    def to_bytes(self) -> bytes:
        arrays = [(f"param/{k}", v) for k, v in sorted(self.params.items())]
        arrays += [(f"momentum/{k}", v) for k, v in sorted(self.momentum.items())]
        entries, chunks, offset = [], [], 0
        for name, arr in arrays:
            raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(raw)
            offset += len(raw)
        manifest = {
            "arrays": entries,
            "config": self.config_text,
            "iteration": self.iteration,
            "model_kind": self.model_kind,
            "num_classes": self.num_classes,
            "optim": self.optim,
            "rng_state": self.rng_state,
        }
        blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<II", self.version, len(blob)) + blob + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> Checkpoint:
        if data[:4] != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        version, mlen = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        start = 12 + mlen
        manifest = json.loads(data[12:start].decode("utf-8"))
        params, momentum = {}, {}
        for e in manifest["arrays"]:
            count = int(np.prod(e["shape"], dtype=np.int64))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=start + e["offset"])
            arr = arr.astype(np.float64).reshape(e["shape"])
            group, name = e["name"].split("/", 1)
            (params if group == "param" else momentum)[name] = arr
        return cls(
            model_kind=manifest["model_kind"],
            num_classes=manifest["num_classes"],
            params=params,
            config_text=manifest["config"],
            iteration=manifest["iteration"],
            optim=manifest["optim"],
            momentum=momentum,
            rng_state=manifest["rng_state"],
            version=version,
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> Checkpoint:
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

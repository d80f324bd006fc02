"""Toy dilated backbone, multi-scale boundary extractor, boundary-guided
attention, non-local baseline and segmentation heads.

Feature maps are N x C x H x W tensors. Backbone stages sit at 1/4, 1/8, 1/8
and 1/8 of the input resolution; stages 3 and 4 use dilation 2 and 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as fn
from . import tensor as T
from .config import MODEL_KINDS, ModelConfig
from .tensor import Tensor

# (stride, dilation) of the two convs in each stage
STAGE_LAYOUT = (
    ((2, 1), (2, 1)),
    ((2, 1), (1, 1)),
    ((1, 2), (1, 2)),
    ((1, 4), (1, 4)),
)


@dataclass
class BackboneFeatures:
    stages: list[Tensor]


@dataclass
class MsbOutput:
    boundary_feature: Tensor
    edge_maps: list[Tensor]


@dataclass
class AttentionMatrix:
    """Column-stochastic N x N map: ``values[i, j]`` is the weight of key
    position ``i`` when aggregating into query position ``j``."""

    values: np.ndarray
    spatial_h: int
    spatial_w: int

    def column(self, j: int) -> np.ndarray:
        return attention_column(self, j)


def attention_column(att: AttentionMatrix, j: int) -> np.ndarray:
    n = att.spatial_h * att.spatial_w
    if not 0 <= j < n:
        raise IndexError(f"reference index {j} outside attention grid of {n} positions")
    return att.values[:, j].reshape(att.spatial_h, att.spatial_w)


@dataclass
class ModelOutput:
    seg_logits: Tensor
    aux_logits: Tensor
    edge_maps: list[Tensor]
    attention: Tensor | None  # (N, n, n) batch of column-stochastic maps
    features: Tensor  # D: head input at 1/8 scale
    grid: tuple[int, int]

    def attention_matrix(self, b: int = 0) -> AttentionMatrix | None:
        if self.attention is None:
            return None
        return AttentionMatrix(self.attention.data[b], *self.grid)


def _he(rng: np.random.Generator, cout: int, cin: int, k: int, gain: float = 2.0) -> np.ndarray:
    return rng.standard_normal((cout, cin, k, k)) * np.sqrt(gain / (cin * k * k))


class BCANet:
    """Segmentation network; ``kind`` selects the context module.

    ``fcn`` has no context module, ``nonlocal`` uses self-attention on the
    backbone output and ``bcanet`` attends from semantic queries to keys
    computed from the multi-scale boundary features.
    """

    def __init__(self, cfg: ModelConfig, num_classes: int, kind: str = "bcanet", seed: int = 0, in_channels: int = 3):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        cfg.validate()
        self.cfg = cfg
        self.kind = kind
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        self._build(rng)

    # -- parameters -------------------------------------------------------

    def _conv(self, rng, name: str, cin: int, cout: int, k: int, gain: float = 2.0) -> None:
        self.params[f"{name}.weight"] = T.parameter(_he(rng, cout, cin, k, gain))
        self.params[f"{name}.bias"] = T.parameter(np.zeros(cout))

    def _build(self, rng) -> None:
        cfg = self.cfg
        cin = self.in_channels
        for s, width in enumerate(cfg.widths, 1):
            self._conv(rng, f"backbone.stage{s}.conv1", cin, width, 3)
            self._conv(rng, f"backbone.stage{s}.conv2", width, width, 3)
            cin = width
        c1 = cfg.widths[-1]
        if self.kind == "bcanet":
            u = cfg.unify_channels
            for s, width in enumerate(cfg.widths, 1):
                self._conv(rng, f"msb.unify{s}", width, u, 3)
                self._conv(rng, f"msb.edge{s}", u, 1, 1, gain=1.0)
            self._conv(rng, "bca.query", c1, cfg.attn_channels, 1, gain=1.0)
            self._conv(rng, "bca.key", 4 * u, cfg.attn_channels, 1, gain=1.0)
            self._conv(rng, "bca.value1", c1, cfg.attn_channels, 1)
            self._conv(rng, "bca.value2", cfg.attn_channels, c1, 1, gain=1.0)
        elif self.kind == "nonlocal":
            self._conv(rng, "nonlocal.query", c1, cfg.attn_channels, 1, gain=1.0)
            self._conv(rng, "nonlocal.key", c1, cfg.attn_channels, 1, gain=1.0)
            self._conv(rng, "nonlocal.value1", c1, cfg.attn_channels, 1)
            self._conv(rng, "nonlocal.value2", cfg.attn_channels, c1, 1, gain=1.0)
        hc = cfg.head_channels
        self._conv(rng, "head.conv1", c1, hc, 3)
        self._conv(rng, "head.conv2", hc, hc, 3)
        self._conv(rng, "head.classifier", hc, self.num_classes, 1, gain=1.0)
        self._conv(rng, "aux.conv1", cfg.widths[cfg.aux_stage - 1], hc, 3)
        self._conv(rng, "aux.classifier", hc, self.num_classes, 1, gain=1.0)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise KeyError(f"parameter mismatch: missing {missing}, unexpected {extra}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k}: {v.shape} vs {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _apply(self, name: str, x: Tensor, stride: int = 1, dilation: int = 1) -> Tensor:
        w = self.params[f"{name}.weight"]
        k = w.shape[-1]
        pad = dilation * (k - 1) // 2
        return fn.conv2d(x, w, self.params[f"{name}.bias"], stride=stride, dilation=dilation, padding=pad)

    # -- components -------------------------------------------------------

    def backbone(self, image: Tensor) -> BackboneFeatures:
        if image.ndim != 4:
            raise ValueError(f"expected N x C x H x W input, got {image.shape}")
        h, w = image.shape[-2:]
        if h % 8 or w % 8:
            raise ValueError(f"input size {h}x{w} must be divisible by 8")
        x = image
        stages = []
        for s, layout in enumerate(STAGE_LAYOUT, 1):
            for c, (stride, dil) in enumerate(layout, 1):
                x = T.relu(self._apply(f"backbone.stage{s}.conv{c}", x, stride, dil))
            stages.append(x)
        return BackboneFeatures(stages)

    def msb(self, feats: BackboneFeatures, out_h: int, out_w: int) -> MsbOutput:
        if len(feats.stages) != 4:
            raise ValueError(f"MSB needs 4 backbone stages, got {len(feats.stages)}")
        gh, gw = feats.stages[-1].shape[-2:]
        unified, edges = [], []
        for s, f in enumerate(feats.stages, 1):
            u = T.relu(self._apply(f"msb.unify{s}", f))
            e = T.sigmoid(self._apply(f"msb.edge{s}", u))
            edges.append(fn.bilinear_resize(e, out_h, out_w))
            unified.append(fn.bilinear_resize(u, gh, gw))
        return MsbOutput(T.concat(unified, axis=1), edges)

    def _attend(self, prefix: str, a: Tensor, key_src: Tensor, mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        n, c1, h, w = a.shape
        if key_src.shape[0] != n or key_src.shape[-2:] != (h, w):
            raise ValueError(f"query map {a.shape} and key map {key_src.shape} differ in batch or spatial size")
        npix = h * w
        q = self._apply(f"{prefix}.query", a)
        k = self._apply(f"{prefix}.key", key_src)
        c = q.shape[1]
        q = T.reshape(q, (n, c, npix))
        k = T.transpose(T.reshape(k, (n, c, npix)), (0, 2, 1))
        logits = T.matmul(k, q)  # [b, i, j] = key_i . query_j
        if mask is None:
            att = T.softmax(logits, axis=1)
        else:
            m = np.asarray(mask, dtype=bool).reshape(-1, npix, 1)  # masks key positions i
            att = fn.masked_softmax(logits, np.broadcast_to(m, logits.shape), axis=1)
        v = self._apply(f"{prefix}.value2", T.relu(self._apply(f"{prefix}.value1", a)))
        v = T.reshape(v, (n, c1, npix))
        agg = T.reshape(T.matmul(v, att), (n, c1, h, w))
        return T.add(a, agg), att

    def bca(self, a: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
        """Aggregate value features of ``a`` with weights from boundary keys ``b``.

        Returns the enhanced map D and the (N, n, n) attention batch.
        """
        return self._attend("bca", a, b)

    def bca_masked(self, a: Tensor, b: Tensor, boundary_mask: np.ndarray) -> Tensor:
        """As :meth:`bca` but with the context sum restricted to ``boundary_mask``
        positions (attention renormalised over them). Not used for training."""
        mask = np.asarray(boundary_mask, dtype=bool)
        if mask.shape[-2:] != a.shape[-2:]:
            raise ValueError(f"mask shape {mask.shape} does not match attention grid {a.shape[-2:]}")
        if not mask.reshape(-1, mask.shape[-2] * mask.shape[-1]).any(axis=1).all():
            raise ValueError("boundary mask selects no positions; context would be empty")
        d, _ = self._attend("bca", a, b, mask=mask)
        return d

    def nonlocal_block(self, a: Tensor) -> tuple[Tensor, Tensor]:
        return self._attend("nonlocal", a, a)

    def seg_head(self, d: Tensor, out_h: int, out_w: int) -> Tensor:
        x = T.relu(self._apply("head.conv1", d))
        x = T.relu(self._apply("head.conv2", x))
        return fn.bilinear_resize(self._apply("head.classifier", x), out_h, out_w)

    def aux_head(self, f: Tensor, out_h: int, out_w: int) -> Tensor:
        x = T.relu(self._apply("aux.conv1", f))
        return fn.bilinear_resize(self._apply("aux.classifier", x), out_h, out_w)

    def forward(self, image) -> ModelOutput:
        image = T.as_tensor(image)
        if image.ndim == 3:
            image = T.reshape(image, (1, *image.shape))
        h, w = image.shape[-2:]
        feats = self.backbone(image)
        a = feats.stages[-1]
        att = None
        edges: list[Tensor] = []
        if self.kind == "bcanet":
            msb = self.msb(feats, h, w)
            edges = msb.edge_maps
            d, att = self.bca(a, msb.boundary_feature)
        elif self.kind == "nonlocal":
            d, att = self.nonlocal_block(a)
        else:
            d = a
        seg = self.seg_head(d, h, w)
        aux = self.aux_head(feats.stages[self.cfg.aux_stage - 1], h, w)
        return ModelOutput(seg, aux, edges, att, d, tuple(a.shape[-2:]))

    __call__ = forward

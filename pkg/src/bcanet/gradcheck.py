"""Central finite-difference checks of analytic gradients.

The numerical side only ever evaluates forward passes on raw arrays, so it is
independent of the backward closures it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, no_grad

STEP = 1e-6
ABS_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|); differences below ``floor`` count as zero."""
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.where(diff <= floor, 0.0, diff / denom)


def numerical_grad(f: Callable[[], float], arr: np.ndarray, h: float = STEP, indices=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    it = range(flat.size) if indices is None else indices
    for i in it:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


@dataclass
class GradReport:
    name: str
    max_rel_err: float
    worst_index: int
    n_checked: int
    max_abs_diff: float = 0.0


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Mapping[str, Tensor],
    h: float = STEP,
    max_entries: int | None = None,
    seed: int = 0,
) -> list[GradReport]:
    """Compare backward() against central differences for every named tensor.

    ``loss_fn`` must rebuild the graph from the current ``.data`` of the given
    tensors on each call. With ``max_entries`` set, a fixed random subset of each
    tensor's entries is checked.
    """
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy() for k, t in tensors.items()}

    def f() -> float:
        with no_grad():
            return loss_fn().item()

    rng = np.random.default_rng(seed)
    reports = []
    for name, t in tensors.items():
        idx = None
        if max_entries is not None and t.size > max_entries:
            idx = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        num = numerical_grad(f, t.data, h, idx)
        a = analytic[name]
        if idx is not None:
            a, num = a.reshape(-1)[idx], num.reshape(-1)[idx]
        err = relative_error(a, num).reshape(-1)
        worst = int(np.argmax(err)) if err.size else 0
        diff = float(np.abs(a - num).max()) if err.size else 0.0
        reports.append(GradReport(name, float(err[worst]) if err.size else 0.0, worst, err.size, diff))
    return reports


# -- scoped harnesses -------------------------------------------------------------

SCOPES = ("bca", "msb", "losses", "full")
TOLERANCE = 1e-5


def _tiny_model(kind: str = "bcanet", num_classes: int = 3, seed: int = 0):
    from .config import ModelConfig
    from .model import BCANet

    cfg = ModelConfig(widths=(2, 2, 2, 2), unify_channels=2, attn_channels=2, head_channels=2)
    model = BCANet(cfg, num_classes, kind, seed=seed)
    # random values everywhere; default init zeroes biases, which would leave
    # some paths (and their gradients) trivially inactive
    rng = np.random.default_rng(seed + 1)
    for p in model.params.values():
        p.data = rng.normal(0.0, 0.5, p.shape)
    return model


def _probe(x: Tensor, rng: np.random.Generator) -> Tensor:
    """mean(x * R) for a fixed random R: an O(1) scalar sensitive to every entry."""
    from . import tensor as T

    return T.mean(T.mul(x, Tensor(rng.standard_normal(x.shape))))


def _scope_bca(seed: int):
    from . import tensor as T

    rng = np.random.default_rng(seed)
    model = _tiny_model(seed=seed)
    a = T.parameter(rng.standard_normal((2, 2, 3, 3)))
    b = T.parameter(rng.standard_normal((2, 8, 3, 3)))
    r = np.random.default_rng(seed + 2)
    probe_seed = int(r.integers(2**31))

    def loss():
        d, _ = model.bca(a, b)
        return _probe(d, np.random.default_rng(probe_seed))

    tensors = {"input.A": a, "input.B": b}
    tensors.update({k: v for k, v in model.params.items() if k.startswith("bca.")})
    return loss, tensors


def _scope_msb(seed: int):
    from . import tensor as T
    from .model import BackboneFeatures

    rng = np.random.default_rng(seed)
    model = _tiny_model(seed=seed)
    shapes = [(1, 2, 4, 4), (1, 2, 2, 2), (1, 2, 2, 2), (1, 2, 2, 2)]  # 16x16 input
    stages = [T.parameter(np.abs(rng.standard_normal(s))) for s in shapes]
    probe_seed = int(rng.integers(2**31))

    def loss():
        out = model.msb(BackboneFeatures(stages), 16, 16)
        prng = np.random.default_rng(probe_seed)
        total = _probe(out.boundary_feature, prng)
        for e in out.edge_maps:
            total = T.add(total, _probe(e, prng))
        return total

    tensors = {f"input.stage{i}": s for i, s in enumerate(stages, 1)}
    tensors.update({k: v for k, v in model.params.items() if k.startswith("msb.")})
    return loss, tensors


def _loss_config():
    from .config import Config, LossWeights

    # a lower gate threshold so the boundary-gated term selects pixels
    return Config(loss=LossWeights(att_threshold=0.5))


def _scope_losses(seed: int):
    from . import tensor as T
    from .trainer import compute_losses
    from .model import ModelOutput

    rng = np.random.default_rng(seed)
    n, k, h, w = 2, 3, 4, 4
    seg = T.parameter(rng.standard_normal((n, k, h, w)))
    aux = T.parameter(rng.standard_normal((n, k, h, w)))
    edge_logits = [T.parameter(rng.standard_normal((n, 1, h, w))) for _ in range(4)]
    masks = rng.integers(0, k, (n, h, w))
    bounds = (rng.random((n, h, w)) < 0.4).astype(np.uint8)
    cfg = _loss_config()

    def loss():
        edges = [T.sigmoid(e) for e in edge_logits]
        out = ModelOutput(seg, aux, edges, None, seg, (h, w))
        return compute_losses(out, masks, bounds, cfg).total

    tensors = {"seg_logits": seg, "aux_logits": aux}
    tensors.update({f"edge_logits{i}": e for i, e in enumerate(edge_logits, 1)})
    return loss, tensors


def _scope_full(seed: int):
    from .data import boundary_from_mask
    from .trainer import compute_losses

    rng = np.random.default_rng(seed)
    model = _tiny_model(seed=seed)
    image = Tensor(rng.uniform(0.0, 1.0, (1, 3, 16, 16)))
    mask = np.zeros((1, 16, 16), dtype=np.int64)
    mask[0, 3:11, 4:13] = 1
    mask[0, 9:15, 1:7] = 2
    bounds = boundary_from_mask(mask[0], 2)[None]
    cfg = _loss_config()

    def loss():
        return compute_losses(model(image), mask, bounds, cfg).total

    # the check is only meaningful if every loss term contributes
    parts = compute_losses(model(image), mask, bounds, cfg).as_dict()
    idle = [k for k in ("l_seg", "l_boundary", "l_att", "l_aux") if parts[k] == 0.0]
    if idle:
        raise RuntimeError(f"full gradcheck problem leaves loss terms inactive: {idle}")
    return loss, dict(model.params)


_BUILDERS = {"bca": _scope_bca, "msb": _scope_msb, "losses": _scope_losses, "full": _scope_full}


def build_scope(scope: str, seed: int = 0):
    """``(loss_fn, tensors)`` for a scope: a scalar closure and the tensors to check."""
    if scope not in _BUILDERS:
        raise ValueError(f"unknown gradcheck scope {scope!r}; expected one of {SCOPES}")
    return _BUILDERS[scope](seed)


def run_scope(scope: str, seed: int = 0, h: float = STEP) -> list[GradReport]:
    """Check every entry of every tensor in ``scope``; one report per tensor."""
    loss_fn, tensors = build_scope(scope, seed)
    return check_gradients(loss_fn, tensors, h)


def worst(reports: list[GradReport]) -> GradReport:
    return max(reports, key=lambda r: r.max_rel_err)

"""Spatial ops on N x C x H x W tensors: convolution, bilinear resize, masked softmax."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import Tensor, _make


def conv_output_size(size: int, k: int, stride: int, dilation: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation of ``x`` (N, Cin, H, W) with ``weight`` (Cout, Cin, k, k).

    Implemented as im2col + a single matmul; the column buffer is kept for the
    weight gradient and scattered back tap by tap for the input gradient.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, k, k2 = weight.shape
    if wcin != cin or k != k2:
        raise ValueError(f"conv2d: weight {weight.shape} does not match input {x.shape}")
    if k % 2 == 0:
        raise ValueError(f"conv2d: kernel size must be odd, got {k}")
    ho = conv_output_size(h, k, stride, dilation, padding)
    wo = conv_output_size(w, k, stride, dilation, padding)
    if ho <= 0 or wo <= 0:
        raise ValueError(
            f"conv2d: non-positive output size {ho}x{wo} for input {h}x{w}, "
            f"k={k} stride={stride} dilation={dilation} padding={padding}"
        )

    xd = x.data
    wmat = weight.data.reshape(cout, -1)
    if k == 1 and stride == 1 and padding == 0:
        cols = xd.transpose(1, 0, 2, 3).reshape(cin, n * h * w)
    else:
        xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
        sn, sc, sh, sw = xp.strides
        view = as_strided(
            xp,
            shape=(cin, k, k, n, ho, wo),
            strides=(sc, dilation * sh, dilation * sw, sn, stride * sh, stride * sw),
            writeable=False,
        )
        cols = view.reshape(cin * k * k, n * ho * wo)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))

    def back(g):
        gm = g.transpose(1, 0, 2, 3).reshape(cout, -1)
        gw = (gm @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = gm.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = wmat.T @ gm
            if k == 1 and stride == 1 and padding == 0:
                gx = np.ascontiguousarray(gcols.reshape(cin, n, h, w).transpose(1, 0, 2, 3))
            else:
                gcols = gcols.reshape(cin, k, k, n, ho, wo).transpose(3, 0, 1, 2, 4, 5)
                gxp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding))
                hspan = stride * (ho - 1) + 1
                wspan = stride * (wo - 1) + 1
                for i in range(k):
                    for j in range(k):
                        r, c = i * dilation, j * dilation
                        gxp[:, :, r : r + hspan : stride, c : c + wspan : stride] += gcols[:, :, i, j]
                gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
                gx = np.ascontiguousarray(gx)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, back, "conv2d")


def bilinear_matrix(in_size: int, out_size: int) -> np.ndarray:
    """Interpolation weights (out_size x in_size), half-pixel centres.

    Source coordinate for output index ``o`` is ``(o + 0.5) * in/out - 0.5``,
    clamped below at 0; neighbours are ``floor(src)`` and ``min(floor(src)+1, in-1)``.
    """
    m = np.zeros((out_size, in_size))
    ratio = in_size / out_size
    for o in range(out_size):
        src = max((o + 0.5) * ratio - 0.5, 0.0)
        i0 = min(int(np.floor(src)), in_size - 1)
        i1 = min(i0 + 1, in_size - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bilinear_resize: output size must be >= 1, got {out_h}x{out_w}")
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return x
    rh = bilinear_matrix(h, out_h)
    rwt = bilinear_matrix(w, out_w).T
    out = rh @ x.data @ rwt

    def back(g):
        return (rh.T @ g @ rwt.T,)

    return _make(out, (x,), back, "bilinear_resize")


def masked_softmax(x: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Softmax along ``axis`` where entries with ``mask == False`` get zero weight."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(mask.any(axis=axis)):
        raise ValueError("masked_softmax: a slice has no unmasked entries")
    z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), back, "masked_softmax")

"""Differentiable N-d (2D/3D) network ops on ``(N, C, *spatial)`` tensors.

Convolutions use the cross-correlation convention (no kernel flip).
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch
from .tensor import Tensor, as_tensor, make_node


def _check_rank(x: Tensor, nd: int, dims, what: str):
    if dims is not None and dims != nd:
        raise ShapeMismatch(f"{what}: kernel has {nd} spatial axes, dims={dims}")
    if x.data.ndim != nd + 2:
        raise ShapeMismatch(f"{what}: expected input of rank {nd + 2}, got shape {x.shape}")


def conv_output_extent(n: int, k: int, stride: int = 1, padding: int = 0) -> int:
    return (n + 2 * padding - k) // stride + 1


def _im2col(xp: np.ndarray, ks, stride: int, out_ext) -> np.ndarray:
    """Patch matrix ``(N*prod(O), prod(K)*C)`` of a padded ``(N, C, *S)`` array.

    Columns are ordered kernel-offset major, channel minor.
    """
    nd = len(ks)
    n = xp.shape[0]
    xc = np.ascontiguousarray(np.moveaxis(xp, 1, -1))
    win = sliding_window_view(xc, ks, axis=tuple(range(1, 1 + nd)))  # (N, *O, C, *K)
    if stride != 1:
        win = win[(slice(None),) + tuple(slice(None, e * stride, stride) for e in out_ext)]
    perm = (0, *range(1, 1 + nd), *range(2 + nd, 2 + 2 * nd), 1 + nd)
    return win.transpose(perm).reshape(n * math.prod(out_ext), -1)


def _kernel_matrix(k: np.ndarray) -> np.ndarray:
    """``(Co, Ci, *K)`` -> ``(Co, prod(K)*Ci)`` matching :func:`_im2col` columns."""
    return np.moveaxis(k, 1, -1).reshape(k.shape[0], -1)


def _correlate(xp: np.ndarray, k: np.ndarray, stride: int, out_ext):
    cols = _im2col(xp, k.shape[2:], stride, out_ext)
    out = cols @ _kernel_matrix(k).T
    return cols, out


def conv_forward(x, k, b=None, stride: int = 1, padding: int = 0, dims=None) -> Tensor:
    """Strided, zero-padded convolution. ``k`` has shape ``(C_out, C_in, *K)``."""
    x, k = as_tensor(x), as_tensor(k)
    nd = k.data.ndim - 2
    _check_rank(x, nd, dims, "conv")
    n, ci = x.shape[:2]
    co, kci, *ks = k.shape
    if kci != ci:
        raise ShapeMismatch(f"conv: input has {ci} channels, kernel expects {kci}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (co,):
            raise ShapeMismatch(f"conv: bias shape {b.shape} != ({co},)")
    spatial = x.shape[2:]
    out_ext = tuple(conv_output_extent(s, kk, stride, padding) for s, kk in zip(spatial, ks))
    if min(out_ext) < 1:
        raise ShapeMismatch(f"conv: kernel {tuple(ks)} larger than padded input {spatial}")

    pad_width = [(0, 0), (0, 0)] + [(padding, padding)] * nd
    xp = np.pad(x.data, pad_width) if padding else x.data
    cols, out = _correlate(xp, k.data, stride, out_ext)
    if b is not None:
        out += b.data
    out = np.ascontiguousarray(np.moveaxis(out.reshape(n, *out_ext, co), -1, 1))

    def backward_fn(g):
        g2 = np.moveaxis(g, 1, -1).reshape(-1, co)
        gk = None
        if k.requires_grad:
            gk = np.moveaxis((g2.T @ cols).reshape(co, *ks, ci), -1, 1)
        gb = g2.sum(axis=0) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            if stride == 1 and all(padding <= kk - 1 for kk in ks):
                # full correlation of the output gradient with the flipped, transposed kernel
                kflip = np.flip(k.data, axis=tuple(range(2, 2 + nd))).swapaxes(0, 1)
                gp = np.pad(g, [(0, 0), (0, 0)] + [(kk - 1 - padding,) * 2 for kk in ks])
                _, gxm = _correlate(gp, kflip, 1, spatial)
                gx = np.moveaxis(gxm.reshape(n, *spatial, ci), -1, 1)
            else:
                gcols = (g2 @ _kernel_matrix(k.data)).reshape(n, *out_ext, math.prod(ks), ci)
                gxp = np.zeros((n, *xp.shape[2:], ci), dtype=g.dtype)
                for i, off in enumerate(itertools.product(*(range(kk) for kk in ks))):
                    dst = (slice(None),) + tuple(
                        slice(o, o + stride * (e - 1) + 1, stride) for o, e in zip(off, out_ext)
                    )
                    gxp[dst] += gcols[..., i, :]
                inner = (slice(None),) + tuple(slice(padding, padding + s) for s in spatial)
                gx = np.moveaxis(gxp[inner], -1, 1)
        return (gx, gk, gb)

    parents = (x, k) if b is None else (x, k, b)
    return make_node(out, parents, backward_fn)


def maxpool(x, window: int = 2, dims=None) -> Tensor:
    """Non-overlapping max pooling; ties go to the first element of the window."""
    x = as_tensor(x)
    nd = x.data.ndim - 2
    if dims is not None and dims != nd:
        raise ShapeMismatch(f"maxpool: input has {nd} spatial axes, dims={dims}")
    spatial = x.shape[2:]
    out_ext = tuple(s // window for s in spatial)
    if min(out_ext) < 1:
        raise ShapeMismatch(f"maxpool: window {window} larger than input {spatial}")
    n, c = x.shape[:2]
    core = x.data[(slice(None), slice(None)) + tuple(slice(0, e * window) for e in out_ext)]
    split = core.reshape(n, c, *itertools.chain.from_iterable((e, window) for e in out_ext))
    # window axes to the back: (N, C, *O, *W)
    perm = (0, 1, *range(2, 2 + 2 * nd, 2), *range(3, 3 + 2 * nd, 2))
    flat = split.transpose(perm).reshape(n, c, *out_ext, window**nd)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        gflat = np.zeros(flat.shape, dtype=g.dtype)
        np.put_along_axis(gflat, arg[..., None], g[..., None], axis=-1)
        inv = np.argsort(perm)
        gsplit = gflat.reshape(n, c, *out_ext, *([window] * nd)).transpose(inv)
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[(slice(None), slice(None)) + tuple(slice(0, e * window) for e in out_ext)] = gsplit.reshape(core.shape)
        return (gx,)

    return make_node(out, (x,), backward_fn)


def upconv(x, k, b=None, stride: int = 2, dims=None) -> Tensor:
    """Transposed convolution. ``k`` has shape ``(C_in, C_out, *K)``; extent ``(N-1)*s + K``."""
    x, k = as_tensor(x), as_tensor(k)
    nd = k.data.ndim - 2
    _check_rank(x, nd, dims, "upconv")
    n, ci = x.shape[:2]
    kci, co, *ks = k.shape
    if kci != ci:
        raise ShapeMismatch(f"upconv: input has {ci} channels, kernel expects {kci}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (co,):
            raise ShapeMismatch(f"upconv: bias shape {b.shape} != ({co},)")
    spatial = x.shape[2:]
    out_ext = tuple((s - 1) * stride + kk for s, kk in zip(spatial, ks))
    offsets = list(itertools.product(*(range(kk) for kk in ks)))

    def _dst(off):
        return (slice(None), slice(None)) + tuple(
            slice(o, o + stride * (s - 1) + 1, stride) for o, s in zip(off, spatial)
        )

    xm = np.moveaxis(x.data, 1, -1).reshape(-1, ci)
    kmat = k.data.reshape(ci, -1)
    cols = (xm @ kmat).reshape(n, *spatial, co, *ks)
    out = np.zeros((n, co, *out_ext), dtype=np.result_type(x.data, k.data))
    for off in offsets:
        out[_dst(off)] += np.moveaxis(cols[(Ellipsis, *off)], -1, 1)
    if b is not None:
        out += b.data.reshape(co, *([1] * nd))

    def backward_fn(g):
        gcols = np.empty((n, *spatial, co, *ks), dtype=g.dtype)
        for off in offsets:
            gcols[(Ellipsis, *off)] = np.moveaxis(g[_dst(off)], 1, -1)
        gcols = gcols.reshape(xm.shape[0], -1)
        gx = np.moveaxis((gcols @ kmat.T).reshape(n, *spatial, ci), -1, 1) if x.requires_grad else None
        gk = (xm.T @ gcols).reshape(k.shape) if k.requires_grad else None
        gb = g.sum(axis=(0, *range(2, 2 + nd))) if b is not None and b.requires_grad else None
        return (gx, gk, gb)

    parents = (x, k) if b is None else (x, k, b)
    return make_node(out, parents, backward_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    # np.maximum propagates NaN, so divergence is not masked
    return make_node(np.maximum(x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(invalid="ignore"):  # NaN passes through; the trainer reports it
        out = np.exp(-np.logaddexp(0, -x.data)).astype(x.dtype)
    return make_node(out, (x,), lambda g: (g * out * (1 - out),))


def concat(a, b, axis: int = 1) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != b.data.ndim or any(
        sa != sb for i, (sa, sb) in enumerate(zip(a.shape, b.shape)) if i != axis % a.data.ndim
    ):
        raise ShapeMismatch(f"concat: shapes {a.shape} and {b.shape} differ off axis {axis}")
    split = a.shape[axis]
    out = np.concatenate([a.data, b.data], axis=axis)

    def backward_fn(g):
        ga, gb = np.split(g, [split], axis=axis)
        return (ga, gb)

    return make_node(out, (a, b), backward_fn)


DICE_EPS = 1e-6
BCE_CLAMP = 1e-7


def dice_bce_loss(pred, target) -> Tensor:
    """``0.5 * soft Dice loss + 0.5 * binary cross-entropy`` over the whole batch."""
    pred = as_tensor(pred)
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if t.shape != pred.shape:
        raise ShapeMismatch(f"loss: pred {pred.shape} vs target {t.shape}")
    p = pred.data.astype(np.float64)
    t = t.astype(np.float64)
    inter, denom = (p * t).sum(), p.sum() + t.sum() + DICE_EPS
    dice = 1.0 - (2.0 * inter + DICE_EPS) / denom
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).mean()
    value = np.asarray(0.5 * dice + 0.5 * bce, dtype=pred.dtype)

    def backward_fn(g):
        d_dice = -(2.0 * t * denom - (2.0 * inter + DICE_EPS)) / denom**2
        inside = (p >= BCE_CLAMP) & (p <= 1.0 - BCE_CLAMP)
        d_bce = np.where(inside, (pc - t) / (pc * (1.0 - pc)), 0.0) / p.size
        return ((float(g) * (0.5 * d_dice + 0.5 * d_bce)).astype(pred.dtype),)

    return make_node(value, (pred,), backward_fn)

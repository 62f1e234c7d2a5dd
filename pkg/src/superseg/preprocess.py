"""Intensity normalization, resampling, cropping and light augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadTarget, DimMismatch, OutOfBounds
from .volume import Volume


@dataclass(frozen=True)
class CropBox:
    """Voxel origin and extent along (h, w, d)."""

    origin: tuple[int, int, int]
    extent: tuple[int, int, int]

    @classmethod
    def centered(cls, v: Volume, extent, center=None) -> "CropBox":
        """Box of ``extent`` centred on ``center`` (default: volume centre), shifted to fit."""
        dims = (v.height, v.width, v.depth)
        if center is None:
            center = tuple(n // 2 for n in dims)
        origin = tuple(
            int(min(max(c - e // 2, 0), max(n - e, 0))) for c, e, n in zip(center, extent, dims)
        )
        return cls(origin, tuple(int(e) for e in extent))


def znormalize(v: Volume) -> Volume:
    """Per-channel zero mean, unit standard deviation; constant channels become 0."""
    x = v.data.astype(np.float64)
    out = np.zeros_like(x)
    for c in range(v.channels):
        mean, std = x[c].mean(), x[c].std()
        if std > 0:
            out[c] = (x[c] - mean) / std
    return v.replace(data=out.astype(np.float32))


def clip_depth(v: Volume, target: int) -> Volume:
    """Drop slices evenly from both ends; an odd remainder drops one more from the end."""
    if target > v.depth or target < 1:
        raise BadTarget(f"cannot clip depth {v.depth} to {target}")
    start = (v.depth - target) // 2
    return v.replace(data=v.data[:, start : start + target].copy())


def crop(v: Volume, box: CropBox) -> Volume:
    dims = (v.height, v.width, v.depth)
    for axis, (o, e, n) in enumerate(zip(box.origin, box.extent, dims)):
        if o < 0 or e < 1 or o + e > n:
            raise OutOfBounds(f"crop box {box} exceeds volume dims {dims} on axis {axis}")
    (oh, ow, od), (eh, ew, ed) = box.origin, box.extent
    return v.replace(data=v.data[:, od : od + ed, oh : oh + eh, ow : ow + ew].copy())


def _resample_axis(x: np.ndarray, axis: int, n_out: int, ratio: float, mode: str) -> np.ndarray:
    n_in = x.shape[axis]
    # voxel-centre mapping into input index space, clamped to the sampled range
    pos = (np.arange(n_out) + 0.5) * ratio - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    if mode == "nearest":
        idx = np.floor(pos + 0.5).astype(np.intp)
        return np.take(x, np.minimum(idx, n_in - 1), axis=axis)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    t = pos - lo
    shape = [1] * x.ndim
    shape[axis] = n_out
    t = t.reshape(shape)
    return np.take(x, lo, axis=axis) * (1.0 - t) + np.take(x, hi, axis=axis) * t


def resample(v: Volume, out_spacing, mode: str = "trilinear") -> Volume:
    """Resample to ``out_spacing`` (mm along h, w, d).

    Output extent per axis is ``round(n * in_spacing / out_spacing)`` (at least 1).
    ``trilinear`` is for images, ``nearest`` for masks.
    """
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"unknown resampling mode {mode!r}")
    out_spacing = tuple(float(np.float32(s)) for s in out_spacing)
    if len(out_spacing) != 3 or any(not s > 0 for s in out_spacing):
        raise ValueError(f"out_spacing must be 3 positive floats, got {out_spacing}")
    x = v.data.astype(np.float64)
    # spacing is (h, w, d); data axes are (c, d, h, w)
    for axis, n_in, s_in, s_out in ((2, v.height, v.spacing[0], out_spacing[0]),
                                    (3, v.width, v.spacing[1], out_spacing[1]),
                                    (1, v.depth, v.spacing[2], out_spacing[2])):
        n_out = max(1, int(round(n_in * s_in / s_out)))
        if n_out == n_in and s_in == s_out:
            continue
        x = _resample_axis(x, axis, n_out, s_out / s_in, mode)
    # float32 -> float64 -> float32 is exact, so skipped axes stay bit-identical
    return Volume(x.astype(np.float32), out_spacing)


def binarize(v: Volume, threshold: float = 0.5) -> Volume:
    return v.replace(data=(v.data >= threshold).astype(np.float32))


def flip(img: Volume, mask: Volume, axes) -> tuple[Volume, Volume]:
    """Flip image and mask along the given spatial axes ('h', 'w', 'd')."""
    lookup = {"d": 1, "h": 2, "w": 3}
    data_axes = tuple(lookup[a] for a in axes)
    if not data_axes:
        return img, mask
    return (
        img.replace(data=np.flip(img.data, data_axes).copy()),
        mask.replace(data=np.flip(mask.data, data_axes).copy()),
    )


def apply_gamma(img: Volume, gamma: float) -> Volume:
    """Per-channel gamma on the channel's range shifted and scaled into [0, 1]."""
    if gamma == 1.0:
        return img
    x = img.data.astype(np.float64)
    out = x.copy()
    for c in range(img.channels):
        lo, hi = x[c].min(), x[c].max()
        if hi > lo:
            u = (x[c] - lo) / (hi - lo)
            out[c] = u**gamma * (hi - lo) + lo
    return img.replace(data=out.astype(np.float32))


def augment(img: Volume, mask: Volume, seed: int) -> tuple[Volume, Volume]:
    """Random flips (p=0.5 per spatial axis, shared by image and mask) then random gamma."""
    if (img.height, img.width, img.depth) != (mask.height, mask.width, mask.depth):
        raise DimMismatch(f"image {img} and mask {mask} differ spatially")
    rng = np.random.default_rng(seed)
    axes = [a for a, hit in zip("hwd", rng.random(3) < 0.5) if hit]
    gamma = float(rng.uniform(0.7, 1.5))
    img, mask = flip(img, mask, axes)
    return apply_gamma(img, gamma), mask

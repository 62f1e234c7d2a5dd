"""Lossless rearrangement between volumes and tiled 2D super images.

Slice ``d`` of a volume with an ``(sh, sw)`` layout lands in grid cell
``(d // sw, d % sw)``; slices fill the grid row-major in ascending depth.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import BadTarget, LayoutMismatch
from .volume import GridLayout, SuperImage, Volume


def tile_slices(arr: np.ndarray, layout: GridLayout) -> np.ndarray:
    """Rearrange ``(..., D, H, W)`` into ``(..., H*sh, W*sw)``."""
    *lead, d, h, w = arr.shape
    if layout.sh * layout.sw != d:
        raise LayoutMismatch(f"layout {layout} holds {layout.tiles} slices, volume has depth {d}")
    grid = arr.reshape(*lead, layout.sh, layout.sw, h, w)
    n = len(lead)
    # (..., sh, sw, H, W) -> (..., sh, H, sw, W)
    grid = grid.transpose(*range(n), n, n + 2, n + 1, n + 3)
    return np.ascontiguousarray(grid).reshape(*lead, layout.sh * h, layout.sw * w)


def untile_slices(arr: np.ndarray, layout: GridLayout, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`tile_slices`: ``(..., H*sh, W*sw)`` -> ``(..., D, H, W)``."""
    *lead, big_h, big_w = arr.shape
    if big_h != h * layout.sh or big_w != w * layout.sw:
        raise LayoutMismatch(
            f"super image {big_h}x{big_w} does not match {h}x{w} slices on a {layout} grid"
        )
    n = len(lead)
    grid = arr.reshape(*lead, layout.sh, h, layout.sw, w)
    grid = grid.transpose(*range(n), n, n + 2, n + 1, n + 3)
    return np.ascontiguousarray(grid).reshape(*lead, layout.tiles, h, w)


def to_super_image(v: Volume, g: GridLayout) -> SuperImage:
    if g.sh * g.sw != v.depth:
        raise LayoutMismatch(f"layout {g} holds {g.tiles} slices, volume has depth {v.depth}")
    return SuperImage(tile_slices(v.data, g), v.height, v.width, g, v.spacing)


def from_super_image(si: SuperImage, g: GridLayout, h: int, w: int) -> Volume:
    if si.height != h * g.sh or si.width != w * g.sw:
        raise LayoutMismatch(
            f"super image {si.height}x{si.width} does not match {h}x{w} slices on a {g} grid"
        )
    return Volume(untile_slices(si.data, g, h, w), si.spacing)


def enumerate_layouts(depth: int) -> list[GridLayout]:
    """All factor pairs of ``depth``, most square first (ties: sh <= sw first)."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    pairs = []
    for sh in range(1, math.isqrt(depth) + 1):
        if depth % sh == 0:
            pairs.append(GridLayout(sh, depth // sh))
            if sh != depth // sh:
                pairs.append(GridLayout(depth // sh, sh))
    # grid aspect ratio == squareness() for square slices
    return sorted(pairs, key=lambda g: (-min(g.sh, g.sw) / max(g.sh, g.sw), g.sh > g.sw))


def squareness(g: GridLayout, h: int, w: int) -> float:
    """Aspect ratio ``min/max`` of the resulting super image; 1.0 iff square."""
    big_h, big_w = h * g.sh, w * g.sw
    return min(big_h, big_w) / max(big_h, big_w)


def pad_depth(v: Volume, target: int, fill: float = 0.0) -> Volume:
    """Append ``target - D`` constant slices after the last slice."""
    if target < v.depth:
        raise BadTarget(f"pad target {target} is smaller than depth {v.depth}")
    if target == v.depth:
        return v
    pad = np.full((v.channels, target - v.depth, v.height, v.width), fill, dtype=np.float32)
    return v.replace(data=np.concatenate([v.data, pad], axis=1))

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Volume:
    """A multi-channel 3D image.

    ``data`` is a float32 array of shape ``(C, D, H, W)`` so that one slice
    of one channel is a contiguous block. ``spacing`` is the voxel size in mm
    along the (h, w, d) axes.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise ValueError(f"volume data must be 4D (C, D, H, W), got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValueError(f"volume extents must be >= 1, got {data.shape}")
        # stored as float32 on disk; keep the same precision in memory
        spacing = tuple(float(np.float32(s)) for s in self.spacing)
        if len(spacing) != 3 or any(not s > 0 for s in spacing):
            raise ValueError(f"spacing must be 3 positive floats, got {self.spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def from_hwdc(cls, array, spacing=(1.0, 1.0, 1.0)) -> "Volume":
        """Build from an ``(H, W, D, C)`` array."""
        array = np.asarray(array)
        if array.ndim == 3:
            array = array[..., None]
        return cls(np.transpose(array, (3, 2, 0, 1)), spacing)

    def to_hwdc(self) -> np.ndarray:
        return np.transpose(self.data, (2, 3, 1, 0))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def depth(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(H, W, D, C)"""
        return (self.height, self.width, self.depth, self.channels)

    def replace(self, data=None, spacing=None) -> "Volume":
        return Volume(self.data if data is None else data, self.spacing if spacing is None else spacing)

    def equals(self, other: "Volume") -> bool:
        """Bit-exact equality of samples and spacing."""
        return (
            self.data.shape == other.data.shape
            and self.spacing == other.spacing
            and self.data.tobytes() == other.data.tobytes()
        )

    def __repr__(self):
        h, w, d, c = self.dims
        return f"Volume({h}x{w}x{d}x{c}, spacing={self.spacing})"


@dataclass(frozen=True)
class GridLayout:
    """Tile rows ``sh`` and tile columns ``sw`` of a super image."""

    sh: int
    sw: int

    def __post_init__(self):
        if int(self.sh) < 1 or int(self.sw) < 1:
            raise ValueError(f"grid layout needs sh, sw >= 1, got ({self.sh}, {self.sw})")
        object.__setattr__(self, "sh", int(self.sh))
        object.__setattr__(self, "sw", int(self.sw))

    @classmethod
    def parse(cls, text: str) -> "GridLayout":
        """Parse ``"6x8"`` (or ``"6,8"``)."""
        parts = text.lower().replace(",", "x").split("x")
        if len(parts) != 2:
            raise ValueError(f"expected SHxSW, got {text!r}")
        return cls(int(parts[0]), int(parts[1]))

    @property
    def tiles(self) -> int:
        return self.sh * self.sw

    def __str__(self):
        return f"{self.sh}x{self.sw}"


@dataclass(frozen=True, eq=False)
class SuperImage:
    """A 2D image of shape ``(C, H*sh, W*sw)`` plus the layout that produced it."""

    data: np.ndarray
    slice_height: int
    slice_width: int
    layout: GridLayout
    spacing: tuple[float, float, float] = field(default=(1.0, 1.0, 1.0))

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"super image data must be 3D (C, H, W), got {data.shape}")
        if data.shape[1] != self.slice_height * self.layout.sh or data.shape[2] != self.slice_width * self.layout.sw:
            raise ValueError(
                f"super image {data.shape[1]}x{data.shape[2]} inconsistent with "
                f"{self.slice_height}x{self.slice_width} slices on a {self.layout} grid"
            )
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

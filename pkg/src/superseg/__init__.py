"""Segmentation of volumes through 2D super images."""
from .codec import enumerate_layouts, from_super_image, pad_depth, squareness, to_super_image
from .volume import GridLayout, SuperImage, Volume

__all__ = [
    "GridLayout",
    "SuperImage",
    "Volume",
    "enumerate_layouts",
    "from_super_image",
    "pad_depth",
    "squareness",
    "to_super_image",
]

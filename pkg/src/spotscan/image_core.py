"""Raster data model, grayscale TIFF I/O, mask PNGs, and overlay rendering.

Coordinate convention used throughout the package: a pixel position is
``(x, y)`` = (column, row), and arrays are indexed ``pixels[y, x]``.
All types are immutable after construction; every operation returns a new
object and never mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

import numpy as np
from PIL import Image

from . import tiff
from .tiff import TiffParseError, TiffUnsupportedError

if TYPE_CHECKING:  # pragma: no cover
    from .hough_circle import Circle

__all__ = [
    "GrayImage",
    "Rect",
    "ChannelPair",
    "BinaryMap",
    "TiffParseError",
    "TiffUnsupportedError",
    "load_gray_tiff",
    "write_gray_tiff",
    "crop",
    "write_mask_png",
    "read_mask_png",
    "overlay_circles",
    "circle_points",
]


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GrayImage:
    """Single-channel raster: ``pixels[y, x]`` with the stated bit depth."""

    pixels: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {arr.shape}")
        dtype = np.uint8 if self.bit_depth == 8 else np.uint16
        if arr.size and (arr.min() < 0 or arr.max() >= 2**self.bit_depth):
            raise ValueError(
                f"intensity out of range for {self.bit_depth}-bit image: "
                f"[{arr.min()}, {arr.max()}]"
            )
        object.__setattr__(self, "pixels", _frozen_array(arr, dtype))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def max_value(self) -> int:
        return 2**self.bit_depth - 1

    def as_float(self) -> np.ndarray:
        """Pixels widened to float64 (all internal arithmetic runs wide)."""
        return self.pixels.astype(np.float64)


@dataclass(frozen=True)
class Rect:
    """Crop window: top-left corner ``(x0, y0)``, size ``w`` x ``h``."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect size must be >= 1x1, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"rect origin must be non-negative, got ({self.x0}, {self.y0})")


@dataclass(frozen=True)
class ChannelPair:
    """Red and green channel rasters of one plate; geometry must match."""

    red: GrayImage
    green: GrayImage

    def __post_init__(self):
        if (
            self.red.width != self.green.width
            or self.red.height != self.green.height
            or self.red.bit_depth != self.green.bit_depth
        ):
            raise ValueError(
                "channel mismatch: red is "
                f"{self.red.width}x{self.red.height}/{self.red.bit_depth}bit, green is "
                f"{self.green.width}x{self.green.height}/{self.green.bit_depth}bit"
            )

    @property
    def width(self) -> int:
        return self.red.width

    @property
    def height(self) -> int:
        return self.red.height


@dataclass(frozen=True)
class BinaryMap:
    """Boolean raster: True marks signal pixels, False background."""

    mask: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mask)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
        object.__setattr__(self, "mask", _frozen_array(arr, bool))

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


def load_gray_tiff(path) -> GrayImage:
    """Read a baseline uncompressed grayscale TIFF (either byte order)."""
    data = Path(path).read_bytes()
    pixels, bits = tiff.decode_gray(data)
    return GrayImage(pixels, bit_depth=bits)


def write_gray_tiff(img: GrayImage, path, byteorder: str = "<") -> None:
    """Write ``img`` as a single-strip baseline TIFF."""
    Path(path).write_bytes(tiff.encode_gray(img.pixels, img.bit_depth, byteorder))


def crop(img: GrayImage, r: Rect) -> GrayImage:
    """Extract the window ``r``; output pixel (i, j) = input pixel (x0+i, y0+j)."""
    if r.x0 + r.w > img.width or r.y0 + r.h > img.height:
        raise ValueError(
            f"crop rect ({r.x0},{r.y0},{r.w},{r.h}) exceeds image {img.width}x{img.height}"
        )
    window = img.pixels[r.y0 : r.y0 + r.h, r.x0 : r.x0 + r.w]
    return GrayImage(window, bit_depth=img.bit_depth)


def write_mask_png(m: BinaryMap, path) -> None:
    """Write a mask as an 8-bit PNG: signal=255, background=0."""
    Image.fromarray(np.where(m.mask, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )


def read_mask_png(path) -> BinaryMap:
    """Read a mask PNG back; any nonzero pixel counts as signal."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return BinaryMap(arr > 0)


def circle_points(u: int, v: int, r: int) -> list[tuple[int, int]]:
    """Integer midpoint-circle locus of radius ``r`` around ``(u, v)``."""
    if r == 0:
        return [(u, v)]
    pts = set()
    x, y = r, 0
    err = 1 - r
    while x >= y:
        for dx, dy in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            pts.add((u + dx, v + dy))
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1
    return sorted(pts)


def overlay_circles(img: GrayImage, circles: Iterable["Circle"], path) -> None:
    """Render the grayscale image as RGB with 1-px pure-green circle outlines.

    Circle points falling outside the image are clipped, never written.
    """
    if img.bit_depth == 8:
        base = img.pixels
    else:
        base = (img.pixels.astype(np.uint32) * 255 // img.max_value).astype(np.uint8)
    rgb = np.stack([base, base, base], axis=-1).copy()
    for c in circles:
        for x, y in circle_points(int(c.u), int(c.v), int(c.r)):
            if 0 <= x < img.width and 0 <= y < img.height:
                rgb[y, x] = (0, 255, 0)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")

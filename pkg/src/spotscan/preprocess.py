"""Sliding-window median noise suppression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import GrayImage

__all__ = ["MedianParams", "median_filter"]


@dataclass(frozen=True)
class MedianParams:
    """Square median window; the side length must be odd."""

    window: int = 3

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"median window must be an odd integer >= 1, got {self.window}")


def median_filter(img: GrayImage, p: MedianParams = MedianParams()) -> GrayImage:
    """Replace each pixel with the median of the window centered on it.

    Borders are handled by edge replication, so the output has the same
    dimensions as the input. An odd window means the sample count is odd and
    the median is always an actual input value.
    """
    w = p.window
    if w > min(img.width, img.height):
        raise ValueError(
            f"window {w} exceeds image dimensions {img.width}x{img.height}"
        )
    if w == 1:
        return img
    half = w // 2
    padded = np.pad(img.pixels, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (w, w))
    flat = windows.reshape(img.height, img.width, w * w)
    mid = (w * w - 1) // 2
    out = np.partition(flat, mid, axis=-1)[:, :, mid]
    return GrayImage(out, bit_depth=img.bit_depth)

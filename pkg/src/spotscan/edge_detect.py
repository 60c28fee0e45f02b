"""Sobel gradients and Canny edge extraction.

The edge maps feed the circle voter, which needs a gradient angle at every
edge pixel, so the angle raster is carried alongside the boolean edge raster.
No Gaussian pre-blur is applied here; the pipeline median-filters upstream,
and smoothing twice blurs away the smallest spots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image_core import GrayImage

__all__ = ["GradientField", "EdgeMap", "CannyParams", "sobel_gradients", "canny"]


@dataclass(frozen=True)
class GradientField:
    """Per-pixel gradient magnitude and angle (radians, in (-pi, pi])."""

    magnitude: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        if self.magnitude.shape != self.angle.shape:
            raise ValueError("magnitude and angle shapes differ")


@dataclass(frozen=True)
class EdgeMap:
    """Boolean edge raster plus the gradient angle retained at every pixel."""

    edges: np.ndarray
    angle: np.ndarray

    def __post_init__(self):
        if self.edges.shape != self.angle.shape:
            raise ValueError("edges and angle shapes differ")

    @property
    def width(self) -> int:
        return self.edges.shape[1]

    @property
    def height(self) -> int:
        return self.edges.shape[0]

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge pixels as (xs, ys, angles) arrays."""
        ys, xs = np.nonzero(self.edges)
        return xs, ys, self.angle[ys, xs]


@dataclass(frozen=True)
class CannyParams:
    """Hysteresis thresholds as adaptive fractions.

    ``high_frac`` is the percentile (as a fraction) of the nonzero gradient
    magnitudes used for the strong threshold; ``low_frac`` scales the strong
    threshold down to the weak one. Percentile thresholds track exposure
    differences between scans, which fixed values do not.
    """

    low_frac: float = 0.4
    high_frac: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.low_frac < 1.0:
            raise ValueError(f"low_frac must be in (0,1), got {self.low_frac}")
        if not 0.0 < self.high_frac <= 1.0:
            raise ValueError(f"high_frac must be in (0,1], got {self.high_frac}")


def sobel_gradients(img: GrayImage) -> GradientField:
    """3x3 Sobel responses with replicated borders.

    magnitude = sqrt(Gx^2 + Gy^2), angle = atan2(Gy, Gx), where x grows with
    the column index and y with the row index. Zero-magnitude pixels get
    angle 0 by convention, and -pi is normalized to pi.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image {img.width}x{img.height} smaller than 3x3 kernel")
    p = np.pad(img.as_float(), 1, mode="edge")
    gx = (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
    )
    gy = (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]) - (
        p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
    )
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    ang[mag == 0.0] = 0.0
    ang[ang == -np.pi] = np.pi
    return GradientField(magnitude=mag, angle=ang)


def _direction_bins(angle: np.ndarray) -> np.ndarray:
    # Quantize to 4 bins over [0, 180); boundary angles fall to the lower bin.
    a = np.degrees(angle) % 180.0
    bins = np.zeros(angle.shape, dtype=np.uint8)
    bins[(a > 22.5) & (a <= 67.5)] = 1  # 45 deg
    bins[(a > 67.5) & (a <= 112.5)] = 2  # 90 deg
    bins[(a > 112.5) & (a <= 157.5)] = 3  # 135 deg
    return bins


def canny(img: GrayImage, p: CannyParams = CannyParams()) -> EdgeMap:
    """Sobel -> directional non-maximum suppression -> hysteresis threshold.

    Suppression keeps a pixel only if its magnitude is >= both neighbors
    along the quantized gradient direction (4 bins). The strong threshold is
    the ``high_frac`` percentile of nonzero gradient magnitudes, the weak one
    ``low_frac`` times that; weak pixels survive only when 8-connected to a
    strong pixel.
    """
    field = sobel_gradients(img)
    mag, ang = field.magnitude, field.angle
    h, w = mag.shape
    if not mag.any():
        return EdgeMap(edges=np.zeros((h, w), dtype=bool), angle=ang)

    padded = np.pad(mag, 1, mode="constant")
    east, west = padded[1:-1, 2:], padded[1:-1, :-2]
    south, north = padded[2:, 1:-1], padded[:-2, 1:-1]
    se, nw = padded[2:, 2:], padded[:-2, :-2]
    sw, ne = padded[2:, :-2], padded[:-2, 2:]

    bins = _direction_bins(ang)
    keep = np.zeros((h, w), dtype=bool)
    keep |= (bins == 0) & (mag >= east) & (mag >= west)
    keep |= (bins == 1) & (mag >= se) & (mag >= nw)
    keep |= (bins == 2) & (mag >= north) & (mag >= south)
    keep |= (bins == 3) & (mag >= sw) & (mag >= ne)
    keep &= mag > 0.0
    thinned = np.where(keep, mag, 0.0)

    high = float(np.percentile(mag[mag > 0.0], 100.0 * p.high_frac))
    low = p.low_frac * high
    strong = thinned >= high
    weak = thinned >= low
    if not strong.any():
        return EdgeMap(edges=np.zeros((h, w), dtype=bool), angle=ang)

    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    keep_label = np.zeros(n + 1, dtype=bool)
    keep_label[labels[strong]] = True
    keep_label[0] = False
    edges = keep_label[labels]
    return EdgeMap(edges=edges, angle=ang)

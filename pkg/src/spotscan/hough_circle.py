"""Gradient-constrained circular Hough transform.

Every edge pixel knows its gradient angle, so instead of voting over a 3-D
(u, v, r) space each pixel votes along the line through itself in the
gradient direction, stepped over the radius band. That traces the same
center locus with a 2-D accumulator A(u, v); the radius is recovered
afterwards by histogramming edge distances around each peak.

Votes run both with and against the gradient by default because a spot may
be brighter or darker than its background, which flips the gradient sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .edge_detect import CannyParams, EdgeMap, canny
from .image_core import GrayImage

__all__ = [
    "ChtParams",
    "CircleAccumulator",
    "Circle",
    "NoSupportError",
    "vote",
    "find_centers",
    "estimate_radius",
    "detect_circles",
]


class NoSupportError(RuntimeError):
    """No edge pixel fell inside the radius band around a candidate center."""


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # np.round ties to even; half-up keeps vote targets platform-stable.
    return np.floor(x + 0.5).astype(np.int64)


@dataclass(frozen=True)
class ChtParams:
    """Radius band and peak-extraction knobs.

    ``min_center_separation`` defaults to twice ``r_min``: neighboring grid
    spots sit at least a spot diameter apart, so closer accumulator peaks are
    duplicates of the same spot.
    """

    r_min: int = 6
    r_max: int = 10
    peak_threshold_frac: float = 0.5
    min_center_separation: int | None = None
    bidirectional: bool = True

    def __post_init__(self):
        if not 1 <= self.r_min <= self.r_max:
            raise ValueError(f"need 1 <= r_min <= r_max, got [{self.r_min}, {self.r_max}]")
        if not 0.0 < self.peak_threshold_frac <= 1.0:
            raise ValueError(
                f"peak_threshold_frac must be in (0,1], got {self.peak_threshold_frac}"
            )
        if self.min_center_separation is None:
            object.__setattr__(self, "min_center_separation", 2 * self.r_min)
        if self.min_center_separation < 0:
            raise ValueError("min_center_separation must be >= 0")


@dataclass(frozen=True)
class CircleAccumulator:
    """Vote counts A(u, v), indexed ``votes[v, u]``, same shape as the image."""

    votes: np.ndarray

    @property
    def total(self) -> int:
        return int(self.votes.sum())


@dataclass(frozen=True, order=True)
class Circle:
    """Detected circle: center (u, v), radius r, accumulator support."""

    u: int
    v: int
    r: int
    support: int = 0


def vote(edges: EdgeMap, p: ChtParams = ChtParams()) -> CircleAccumulator:
    """Accumulate center votes from every edge pixel.

    For an edge pixel (x, y) with gradient angle theta, candidate centers are
    (x - r cos(theta), y - r sin(theta)) for each integer r in the band, plus
    the mirrored (x + ..., y + ...) targets when bidirectional. Targets are
    rounded to the nearest cell; votes landing outside the array are dropped.
    """
    h, w = edges.edges.shape
    acc = np.zeros((h, w), dtype=np.int64)
    xs, ys, th = edges.points()
    if xs.size == 0:
        return CircleAccumulator(acc)
    cos_t, sin_t = np.cos(th), np.sin(th)
    signs = (-1.0, 1.0) if p.bidirectional else (-1.0,)
    for r in range(p.r_min, p.r_max + 1):
        for sign in signs:
            us = _round_half_up(xs + sign * r * cos_t)
            vs = _round_half_up(ys + sign * r * sin_t)
            ok = (us >= 0) & (us < w) & (vs >= 0) & (vs < h)
            np.add.at(acc, (vs[ok], us[ok]), 1)
    return CircleAccumulator(acc)


def find_centers(
    acc: CircleAccumulator, p: ChtParams = ChtParams()
) -> list[tuple[int, int, int]]:
    """Extract peak cells as (u, v, support), strongest first.

    A peak is >= all 8 neighbors and >= peak_threshold_frac of the global
    maximum. Surviving peaks are greedily thinned so any two are at least
    ``min_center_separation`` apart (strongest kept; ties broken by smaller
    (v, u)).
    """
    a = acc.votes
    gmax = int(a.max(initial=0))
    if gmax <= 0:
        return []
    threshold = p.peak_threshold_frac * gmax
    neighborhood_max = ndimage.maximum_filter(a, size=3, mode="constant", cval=0)
    vs, us = np.nonzero((a == neighborhood_max) & (a >= threshold) & (a > 0))
    support = a[vs, us]
    order = np.lexsort((us, vs, -support))
    min_sep2 = float(p.min_center_separation) ** 2

    kept: list[tuple[int, int, int]] = []
    for i in order:
        u, v, s = int(us[i]), int(vs[i]), int(support[i])
        if all((u - ku) ** 2 + (v - kv) ** 2 >= min_sep2 for ku, kv, _ in kept):
            kept.append((u, v, s))
    return kept


def estimate_radius(
    center: tuple[int, int], edges: EdgeMap, p: ChtParams = ChtParams()
) -> int:
    """Mode of the edge-distance histogram over integer radii in the band.

    Ties go to the smaller radius. Raises :class:`NoSupportError` when no
    edge pixel rounds into the band; callers fall back to the median radius
    of the other spots.
    """
    u, v = center
    xs, ys, _ = edges.points()
    if xs.size == 0:
        raise NoSupportError(f"no edge pixels at all around center ({u}, {v})")
    dist = np.hypot(xs - float(u), ys - float(v))
    r_int = _round_half_up(dist)
    in_band = (r_int >= p.r_min) & (r_int <= p.r_max)
    if not in_band.any():
        raise NoSupportError(
            f"no edge pixel within radius band [{p.r_min}, {p.r_max}] of ({u}, {v})"
        )
    counts = np.bincount(r_int[in_band] - p.r_min, minlength=p.r_max - p.r_min + 1)
    return p.r_min + int(np.argmax(counts))  # argmax takes the first = smallest r


def detect_circles(
    img: GrayImage,
    canny_params: CannyParams = CannyParams(),
    cht: ChtParams = ChtParams(),
) -> list[Circle]:
    """Full detector: canny -> vote -> peaks -> per-peak radius estimate.

    Returns circles sorted by descending support. Centers whose radius
    cannot be estimated take the median radius of the ones that could; if
    none could, those centers are dropped.
    """
    edges = canny(img, canny_params)
    acc = vote(edges, cht)
    centers = find_centers(acc, cht)
    radii: list[int | None] = []
    for u, v, _ in centers:
        try:
            radii.append(estimate_radius((u, v), edges, cht))
        except NoSupportError:
            radii.append(None)
    known = [r for r in radii if r is not None]
    fallback = int(np.floor(np.median(known) + 0.5)) if known else None
    circles = []
    for (u, v, s), r in zip(centers, radii):
        if r is None:
            if fallback is None:
                continue
            r = fallback
        circles.append(Circle(u=u, v=v, r=r, support=s))
    return circles

"""Grid addressing, per-spot window extraction, and spot segmentation.

Detected circles are clustered onto the printed grid by 1-D gap splitting of
their center coordinates, which is robust as long as most spots were found.
Each grid cell then yields a small two-channel window around its circle, and
four segmenters produce foreground masks over that window: the detected
circle itself, 1-D two-means intensity clustering, a linear max-margin
classifier, and a fixed-radius circle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hough_circle import Circle
from .image_core import BinaryMap, ChannelPair, GrayImage, Rect, crop

__all__ = [
    "AddressingError",
    "GridSpec",
    "GridCell",
    "SpotGrid",
    "SpotRegion",
    "SpotSegmentation",
    "MarginModel",
    "KmeansResult",
    "assign_grid",
    "extract_spot",
    "segment_cht",
    "segment_kmeans",
    "kmeans_1d",
    "pixel_features",
    "train_margin_classifier",
    "segment_svm",
    "segment_fixed_circle",
    "stitch_masks",
]

GUARD_WIDTH = 1.0  # annulus r < d <= r+1 excluded from both stat classes


class AddressingError(RuntimeError):
    """Too few detections to address the grid; upstream parameters are off."""


@dataclass(frozen=True)
class GridSpec:
    """Expected printed-grid dimensions."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")


@dataclass(frozen=True)
class GridCell:
    row: int
    col: int
    circle: Circle
    provenance: str  # 'detected' | 'interpolated'


@dataclass(frozen=True)
class SpotGrid:
    """One circle per grid cell, row-major, with detection provenance."""

    spec: GridSpec
    cells: tuple[GridCell, ...]
    image_width: int
    image_height: int

    def cell(self, row: int, col: int) -> GridCell:
        return self.cells[row * self.spec.cols + col]


@dataclass(frozen=True)
class SpotRegion:
    """Two-channel window around one grid cell.

    ``circle`` is in window-local coordinates; ``offset`` maps local (x, y)
    back to plate coordinates (x + offset[0], y + offset[1]).
    """

    red: GrayImage
    green: GrayImage
    circle: Circle
    offset: tuple[int, int]
    row: int
    col: int


@dataclass(frozen=True)
class SpotSegmentation:
    mask: BinaryMap
    method: str
    degenerate: bool = False


def _split_1d(values: np.ndarray, groups: int) -> np.ndarray:
    """Assign each value a group index 0..groups-1 by largest-gap splitting."""
    order = np.argsort(values, kind="stable")
    if groups == 1:
        return np.zeros(values.size, dtype=int)
    sorted_vals = values[order]
    gaps = np.diff(sorted_vals)
    # rows-1 widest gaps, earliest position on ties, cut in ascending position
    cut_after = np.sort(np.argsort(-gaps, kind="stable")[: groups - 1])
    group_of_rank = np.zeros(values.size, dtype=int)
    for g, cut in enumerate(cut_after):
        group_of_rank[cut + 1 :] = g + 1
    out = np.empty(values.size, dtype=int)
    out[order] = group_of_rank
    return out


def assign_grid(
    circles: Sequence[Circle], spec: GridSpec, image_size: tuple[int, int]
) -> SpotGrid:
    """Address detected circles onto the rows x cols grid.

    Center y/x coordinates are clustered into row/column groups by sorted gap
    splitting. When two circles land in one cell the higher-support one wins;
    empty cells get the row/column mean center and the median detected
    radius, flagged ``interpolated``.
    """
    width, height = image_size
    needed = max(spec.rows, spec.cols, -(-spec.rows * spec.cols // 2))
    if len(circles) < needed:
        raise AddressingError(
            f"only {len(circles)} circles detected for a {spec.rows}x{spec.cols} grid "
            f"(need at least {needed})"
        )
    us = np.array([c.u for c in circles], dtype=float)
    vs = np.array([c.v for c in circles], dtype=float)
    row_of = _split_1d(vs, spec.rows)
    col_of = _split_1d(us, spec.cols)

    best: dict[tuple[int, int], Circle] = {}
    for circle, r, c in zip(circles, row_of, col_of):
        key = (int(r), int(c))
        cur = best.get(key)
        if cur is None or (circle.support, -circle.v, -circle.u) > (
            cur.support,
            -cur.v,
            -cur.u,
        ):
            best[key] = circle

    detected = list(best.values())
    median_r = int(np.floor(np.median([c.r for c in detected]) + 0.5))
    row_v = {
        r: float(np.mean([c.v for (rr, _), c in best.items() if rr == r]))
        for r in {k[0] for k in best}
    }
    col_u = {
        c: float(np.mean([cc.u for (_, ccol), cc in best.items() if ccol == c]))
        for c in {k[1] for k in best}
    }
    # a fully empty row/column group cannot occur (gap splitting always puts
    # at least one value per group), but guard the lattice fallback anyway
    all_v = float(np.mean(vs))
    all_u = float(np.mean(us))

    cells = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            hit = best.get((r, c))
            if hit is not None:
                cells.append(GridCell(row=r, col=c, circle=hit, provenance="detected"))
                continue
            u = int(np.floor(col_u.get(c, all_u) + 0.5))
            v = int(np.floor(row_v.get(r, all_v) + 0.5))
            u = min(max(u, 0), width - 1)
            v = min(max(v, 0), height - 1)
            cells.append(
                GridCell(
                    row=r,
                    col=c,
                    circle=Circle(u=u, v=v, r=median_r, support=0),
                    provenance="interpolated",
                )
            )
    return SpotGrid(
        spec=spec, cells=tuple(cells), image_width=width, image_height=height
    )


def extract_spot(
    pair: ChannelPair, grid: SpotGrid, row: int, col: int, margin: int = 4
) -> SpotRegion:
    """Crop the window of side 2(r+margin)+1 centered on the cell's circle.

    Windows are clipped at the plate borders; the recorded offset keeps the
    global<->local coordinate round trip exact.
    """
    cell = grid.cell(row, col)
    c = cell.circle
    half = c.r + margin
    x0 = max(0, c.u - half)
    y0 = max(0, c.v - half)
    x1 = min(pair.width, c.u + half + 1)
    y1 = min(pair.height, c.v + half + 1)
    rect = Rect(x0=x0, y0=y0, w=x1 - x0, h=y1 - y0)
    local = Circle(u=c.u - x0, v=c.v - y0, r=c.r, support=c.support)
    return SpotRegion(
        red=crop(pair.red, rect),
        green=crop(pair.green, rect),
        circle=local,
        offset=(x0, y0),
        row=row,
        col=col,
    )


def _distance_grid(width: int, height: int, u: int, v: int) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    return np.hypot(xs - float(u), ys - float(v))


def _disk_mask(width: int, height: int, u: int, v: int, r: float) -> np.ndarray:
    return _distance_grid(width, height, u, v) <= float(r)


def segment_cht(spot: SpotRegion) -> SpotSegmentation:
    """Signal = pixels within the detected circle; pure geometry."""
    c = spot.circle
    mask = _disk_mask(spot.red.width, spot.red.height, c.u, c.v, c.r)
    return SpotSegmentation(mask=BinaryMap(mask), method="cht")


def segment_fixed_circle(spot: SpotRegion, r_fixed: int) -> SpotSegmentation:
    """Same geometry rule as the detected circle, but with a constant radius."""
    if r_fixed < 0:
        raise ValueError(f"r_fixed must be >= 0, got {r_fixed}")
    c = spot.circle
    mask = _disk_mask(spot.red.width, spot.red.height, c.u, c.v, r_fixed)
    return SpotSegmentation(mask=BinaryMap(mask), method="fixed")


@dataclass(frozen=True)
class KmeansResult:
    labels: np.ndarray  # True = signal cluster
    mean_low: float
    mean_high: float
    wss_history: tuple[float, ...]
    iterations: int
    degenerate: bool


def kmeans_1d(values: np.ndarray, max_iter: int = 100) -> KmeansResult:
    """Two-means on a 1-D sample, seeded from the extreme intensities.

    Initial labels: a value is signal when it is strictly closer to the
    maximum than to the minimum; equidistant values go to background. Each
    iteration reassigns to the nearer cluster mean (ties to the lower mean)
    and recomputes means, until labels stop changing.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 1:
        raise ValueError("empty sample")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return KmeansResult(
            labels=np.zeros(x.size, dtype=bool),
            mean_low=lo,
            mean_high=hi,
            wss_history=(0.0,),
            iterations=0,
            degenerate=True,
        )

    def wss(labels: np.ndarray, m_lo: float, m_hi: float) -> float:
        return float(((x - np.where(labels, m_hi, m_lo)) ** 2).sum())

    # closer-to-max <=> above the midpoint; strict keeps ties in background
    labels = x > (lo + hi) / 2.0
    m_hi = float(x[labels].mean())
    m_lo = float(x[~labels].mean())
    history = [wss(labels, m_lo, m_hi)]
    iterations = 0
    for _ in range(max_iter):
        new_labels = x > (m_lo + m_hi) / 2.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        m_hi = float(x[labels].mean())
        m_lo = float(x[~labels].mean())
        iterations += 1
        history.append(wss(labels, m_lo, m_hi))
    return KmeansResult(
        labels=labels,
        mean_low=m_lo,
        mean_high=m_hi,
        wss_history=tuple(history),
        iterations=iterations,
        degenerate=False,
    )


def segment_kmeans(spot: SpotRegion, channel: str = "red") -> SpotSegmentation:
    """Two-means intensity clustering; the higher-mean cluster is signal.

    A constant window has no clusters: the result is an all-background mask
    with the ``degenerate`` flag set.
    """
    window = spot.red if channel == "red" else spot.green
    result = kmeans_1d(window.pixels)
    mask = result.labels.reshape(window.height, window.width)
    return SpotSegmentation(
        mask=BinaryMap(mask), method="kmeans", degenerate=result.degenerate
    )


@dataclass(frozen=True)
class MarginModel:
    """Linear decision rule: signal iff w . x - b > 0."""

    w: np.ndarray
    b: float

    def predict(self, features: np.ndarray) -> np.ndarray:
        feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return feats @ np.asarray(self.w, dtype=np.float64) - self.b > 0.0


def pixel_features(window: GrayImage, circle: Circle) -> np.ndarray:
    """Per-pixel feature rows (normalized intensity, normalized radial distance).

    Intensity is min-max scaled within the window; radial distance from the
    circle center is scaled by the window half-diagonal so both features live
    in [0, 1] regardless of exposure or window size.
    """
    vals = window.as_float().ravel()
    lo, hi = vals.min(), vals.max()
    norm = (vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals)
    dist = _distance_grid(window.width, window.height, circle.u, circle.v).ravel()
    half_diag = float(np.hypot(window.width - 1, window.height - 1)) / 2.0
    radial = dist / half_diag if half_diag > 0 else np.zeros_like(dist)
    return np.column_stack([norm, np.minimum(radial, 1.0)])


def train_margin_classifier(
    samples: Iterable[tuple[Sequence[float], int]],
    epochs: int = 400,
    lam: float = 1e-3,
    seed: int = 0,
    max_samples: int = 50_000,
) -> MarginModel:
    """Fit (w, b) by full-batch subgradient descent on regularized hinge loss.

    The epoch count and step schedule are fixed, and oversized training sets
    are subsampled with the given seed, so training is deterministic.
    """
    pairs = list(samples)
    if not pairs:
        raise ValueError("empty training set")
    X = np.asarray([p[0] for p in pairs], dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y01 = np.asarray([p[1] for p in pairs], dtype=np.int64)
    if set(np.unique(y01)) != {0, 1}:
        raise ValueError("training set must contain both labels 0 and 1")
    if X.shape[0] > max_samples:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(X.shape[0], size=max_samples, replace=False))
        X, y01 = X[idx], y01[idx]
    y = 2.0 * y01 - 1.0

    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for t in range(1, epochs + 1):
        step = 1.0 / (1.0 + lam * t)
        margins = y * (X @ w - b)
        violating = margins < 1.0
        if violating.any():
            grad_w = lam * w - (y[violating, None] * X[violating]).sum(axis=0) / n
            grad_b = y[violating].sum() / n
        else:
            grad_w = lam * w
            grad_b = 0.0
        w = w - step * grad_w
        b = b - step * grad_b
    return MarginModel(w=w, b=float(b))


def segment_svm(
    spot: SpotRegion, model: MarginModel, channel: str = "red"
) -> SpotSegmentation:
    """Label each window pixel with the trained linear decision rule."""
    window = spot.red if channel == "red" else spot.green
    feats = pixel_features(window, spot.circle)
    mask = model.predict(feats).reshape(window.height, window.width)
    return SpotSegmentation(mask=BinaryMap(mask), method="svm")


def stitch_masks(
    width: int, height: int, regions: Iterable[tuple[SpotRegion, SpotSegmentation]]
) -> BinaryMap:
    """Union per-spot window masks into one plate-sized mask."""
    full = np.zeros((height, width), dtype=bool)
    for spot, seg in regions:
        x0, y0 = spot.offset
        m = seg.mask.mask
        full[y0 : y0 + m.shape[0], x0 : x0 + m.shape[1]] |= m
    return BinaryMap(full)

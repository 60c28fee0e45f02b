"""Synthetic two-channel plate generator with exact ground truth.

Plates carry per-cell circles, full-plate truth masks, and analytic
expression levels, which makes them the benchmark oracle for the detector,
the segmenters, and the quantifier. Rendering is strictly row-major per cell
so a seed pins the entire plate bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .grid_segment import (
    GridCell,
    GridSpec,
    SpotGrid,
    extract_spot,
    segment_fixed_circle,
)
from .hough_circle import Circle
from .image_core import BinaryMap, ChannelPair, GrayImage
from .quantify import expression_level, spot_stats

__all__ = [
    "SynthParams",
    "SyntheticPlate",
    "SegmentationScore",
    "generate",
    "truth_grid",
    "margin_training_set",
    "score_segmentation",
]


@dataclass(frozen=True)
class SynthParams:
    """Plate geometry, intensity model, and noise knobs.

    ``pitch`` must exceed 2*r_hi + 2*jitter so neighboring spots can never
    collide. Foreground intensities are sampled per spot and channel as
    integers in [fg_lo, fg_hi]; the background is flat at ``background``.
    ``profile`` is ``flat`` (sharp-edged disk) or ``gaussian`` (soft falloff
    with scale equal to the spot radius; the truth mask stays the disk).
    """

    rows: int = 21
    cols: int = 24
    pitch: int = 30
    r_lo: int = 6
    r_hi: int = 10
    fg_lo: int = 2000
    fg_hi: int = 4000
    background: int = 500
    noise_sigma: float = 0.0
    dropout: float = 0.0
    jitter: int = 2
    seed: int = 0
    bit_depth: int = 16
    profile: str = "flat"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if not 1 <= self.r_lo <= self.r_hi:
            raise ValueError(f"need 1 <= r_lo <= r_hi, got [{self.r_lo}, {self.r_hi}]")
        if self.pitch <= 2 * self.r_hi + 2 * self.jitter:
            raise ValueError(
                f"pitch {self.pitch} too small: spots of radius {self.r_hi} with "
                f"jitter {self.jitter} can collide (need > {2 * self.r_hi + 2 * self.jitter})"
            )
        if self.jitter < 0 or not 0.0 <= self.dropout <= 1.0:
            raise ValueError("jitter must be >= 0 and dropout in [0, 1]")
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        max_val = 2**self.bit_depth - 1
        if not 0 <= self.background <= max_val or not 0 <= self.fg_lo <= self.fg_hi <= max_val:
            raise ValueError("intensity ranges exceed the bit depth")
        if self.profile not in ("flat", "gaussian"):
            raise ValueError(f"profile must be 'flat' or 'gaussian', got {self.profile!r}")

    @property
    def width(self) -> int:
        return self.cols * self.pitch

    @property
    def height(self) -> int:
        return self.rows * self.pitch


@dataclass(frozen=True)
class SyntheticPlate:
    """Rendered channels plus everything the generator knows to be true."""

    params: SynthParams
    channels: ChannelPair
    truth_circles: dict[tuple[int, int], Circle | None]
    truth_masks: tuple[BinaryMap, BinaryMap]  # (red, green); identical geometry
    truth_expression: dict[tuple[int, int], float | None]
    truth_foreground: dict[tuple[int, int], tuple[int, int] | None]

    def present_cells(self) -> Iterator[tuple[int, int, Circle]]:
        for (row, col), circle in sorted(self.truth_circles.items()):
            if circle is not None:
                yield row, col, circle


def _render_cell(canvas: np.ndarray, p: SynthParams, circle: Circle, fg: int) -> None:
    r, cu, cv = circle.r, circle.u, circle.v
    if p.profile == "flat":
        x0, x1 = cu - r, cu + r + 1
        y0, y1 = cv - r, cv + r + 1
        ys, xs = np.mgrid[y0:y1, x0:x1]
        inside = (xs - cu) ** 2 + (ys - cv) ** 2 <= r * r
        canvas[y0:y1, x0:x1][inside] = float(fg)
    else:
        # soft profile rendered over the whole cell box; tails are truncated
        # at the box edge so cells stay independent
        col_box = (circle.u // p.pitch) * p.pitch
        row_box = (circle.v // p.pitch) * p.pitch
        ys, xs = np.mgrid[row_box : row_box + p.pitch, col_box : col_box + p.pitch]
        d2 = (xs - float(cu)) ** 2 + (ys - float(cv)) ** 2
        bump = (fg - p.background) * np.exp(-d2 / (2.0 * float(r) ** 2))
        region = canvas[row_box : row_box + p.pitch, col_box : col_box + p.pitch]
        np.maximum(region, p.background + bump, out=region)


def generate(p: SynthParams) -> SyntheticPlate:
    """Render a plate and its ground truth, deterministically from the seed."""
    rng = np.random.default_rng(p.seed)
    h, w = p.height, p.width
    max_val = 2**p.bit_depth - 1
    red = np.full((h, w), float(p.background))
    green = np.full((h, w), float(p.background))
    truth_mask = np.zeros((h, w), dtype=bool)

    circles: dict[tuple[int, int], Circle | None] = {}
    foregrounds: dict[tuple[int, int], tuple[int, int] | None] = {}
    for row in range(p.rows):
        for col in range(p.cols):
            jx = int(rng.integers(-p.jitter, p.jitter + 1))
            jy = int(rng.integers(-p.jitter, p.jitter + 1))
            r = int(rng.integers(p.r_lo, p.r_hi + 1))
            fg_r = int(rng.integers(p.fg_lo, p.fg_hi + 1))
            fg_g = int(rng.integers(p.fg_lo, p.fg_hi + 1))
            dropped = rng.random() < p.dropout
            key = (row, col)
            if dropped:
                circles[key] = None
                foregrounds[key] = None
                continue
            cu = col * p.pitch + p.pitch // 2 + jx
            cv = row * p.pitch + p.pitch // 2 + jy
            circle = Circle(u=cu, v=cv, r=r, support=0)
            circles[key] = circle
            foregrounds[key] = (fg_r, fg_g)
            _render_cell(red, p, circle, fg_r)
            _render_cell(green, p, circle, fg_g)
            ys, xs = np.mgrid[cv - r : cv + r + 1, cu - r : cu + r + 1]
            truth_mask[cv - r : cv + r + 1, cu - r : cu + r + 1] |= (
                (xs - cu) ** 2 + (ys - cv) ** 2 <= r * r
            )

    dtype = np.uint8 if p.bit_depth == 8 else np.uint16

    def quantize(canvas: np.ndarray) -> GrayImage:
        clipped = np.clip(np.floor(canvas + 0.5), 0, max_val)
        return GrayImage(clipped.astype(dtype), bit_depth=p.bit_depth)

    noiseless = ChannelPair(red=quantize(red), green=quantize(green))
    if p.noise_sigma > 0.0:
        channels = ChannelPair(
            red=quantize(red + rng.normal(0.0, p.noise_sigma, red.shape)),
            green=quantize(green + rng.normal(0.0, p.noise_sigma, green.shape)),
        )
    else:
        channels = noiseless

    masks = (BinaryMap(truth_mask), BinaryMap(truth_mask))
    grid = _grid_from_circles(p, circles)
    return SyntheticPlate(
        params=p,
        channels=channels,
        truth_circles=circles,
        truth_masks=masks,
        truth_expression=_truth_expression(noiseless, grid, circles),
        truth_foreground=foregrounds,
    )


def _truth_expression(
    noiseless: ChannelPair,
    grid: SpotGrid,
    circles: dict[tuple[int, int], Circle | None],
) -> dict[tuple[int, int], float | None]:
    # Run the real stats path on the noiseless plate with true circles, so
    # the recorded levels follow exactly the same definitions the analyzer
    # applies downstream.
    out: dict[tuple[int, int], float | None] = {key: None for key in circles}
    for (row, col), circle in sorted(circles.items()):
        if circle is None:
            continue
        spot = extract_spot(noiseless, grid, row, col)
        seg = segment_fixed_circle(spot, circle.r)
        red = spot_stats(spot, seg, "red")
        green = spot_stats(spot, seg, "green")
        _, _, level, _ = expression_level(red, green)
        out[(row, col)] = level
    return out


def _grid_from_circles(
    p: SynthParams, circles: dict[tuple[int, int], Circle | None]
) -> SpotGrid:
    present = [c for c in circles.values() if c is not None]
    median_r = int(np.floor(np.median([c.r for c in present]) + 0.5)) if present else p.r_lo
    cells = []
    for row in range(p.rows):
        for col in range(p.cols):
            circle = circles[(row, col)]
            if circle is None:
                circle = Circle(
                    u=col * p.pitch + p.pitch // 2,
                    v=row * p.pitch + p.pitch // 2,
                    r=median_r,
                    support=0,
                )
                provenance = "interpolated"
            else:
                provenance = "detected"
            cells.append(GridCell(row=row, col=col, circle=circle, provenance=provenance))
    return SpotGrid(
        spec=GridSpec(rows=p.rows, cols=p.cols),
        cells=tuple(cells),
        image_width=p.width,
        image_height=p.height,
    )


def truth_grid(plate: SyntheticPlate) -> SpotGrid:
    """SpotGrid built from the generator's own circles.

    Dropped cells are filled with the nominal lattice point and the median
    true radius, mirroring what grid interpolation would produce.
    """
    return _grid_from_circles(plate.params, plate.truth_circles)


def margin_training_set(
    plate: SyntheticPlate, margin: int = 4
) -> list[tuple[tuple[float, float], int]]:
    """Per-pixel (features, label) pairs from a plate's truth masks."""
    from .grid_segment import pixel_features  # local import to keep cycles out

    grid = truth_grid(plate)
    truth = plate.truth_masks[0].mask
    samples: list[tuple[tuple[float, float], int]] = []
    for row, col, _ in plate.present_cells():
        spot = extract_spot(plate.channels, grid, row, col, margin=margin)
        feats = pixel_features(spot.red, spot.circle)
        x0, y0 = spot.offset
        labels = truth[y0 : y0 + spot.red.height, x0 : x0 + spot.red.width].ravel()
        samples.extend(
            ((float(f[0]), float(f[1])), int(lab)) for f, lab in zip(feats, labels)
        )
    return samples


@dataclass(frozen=True)
class SegmentationScore:
    precision: float
    recall: float
    f1: float
    accuracy: float


def score_segmentation(pred: BinaryMap, truth: BinaryMap) -> SegmentationScore:
    """Pixel confusion-matrix scores; two empty masks count as a perfect 1.0."""
    if pred.mask.shape != truth.mask.shape:
        raise ValueError(
            f"mask dimensions differ: {pred.mask.shape} vs {truth.mask.shape}"
        )
    tp = int((pred.mask & truth.mask).sum())
    fp = int((pred.mask & ~truth.mask).sum())
    fn = int((~pred.mask & truth.mask).sum())
    tn = int((~pred.mask & ~truth.mask).sum())
    if tp + fp + fn == 0:
        return SegmentationScore(precision=1.0, recall=1.0, f1=1.0, accuracy=1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    accuracy = (tp + tn) / (tp + fp + fn + tn)
    return SegmentationScore(precision=precision, recall=recall, f1=f1, accuracy=accuracy)

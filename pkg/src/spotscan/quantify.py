"""Per-spot statistics, expression ratios, and quality scores.

Expression level is log2 of the background-subtracted red/green intensity
ratio; subtracted intensities are clamped to a small epsilon so the log is
always defined, with clamped spots flagged.

The quality sub-scores combine signal-to-noise with two background terms.
The background terms are normalized plate-wide: the local-background
coefficient of variation and the background level are each scaled by their
maximum over the plate, which keeps every sub-score in [0, 1] with higher
meaning better (low, stable background).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict
from typing import Iterable, Mapping, Sequence

import numpy as np

from .grid_segment import (
    GUARD_WIDTH,
    MarginModel,
    SpotGrid,
    SpotRegion,
    SpotSegmentation,
    extract_spot,
    segment_cht,
    segment_fixed_circle,
    segment_kmeans,
    segment_svm,
)
from .image_core import ChannelPair

__all__ = [
    "EPSILON",
    "EmptyClassError",
    "UndefinedCvError",
    "DegeneratePlateError",
    "SpotStats",
    "PlateContext",
    "ExpressionRecord",
    "MethodSummary",
    "ComparisonReport",
    "QUANT_CSV_COLUMNS",
    "stats_from_values",
    "spot_stats",
    "plate_context",
    "expression_level",
    "q_sig_noise",
    "q_bkg1",
    "q_bkg2",
    "q_com2",
    "q_index",
    "segment_one",
    "quantify_spots",
    "compare_methods",
    "write_quant_csv",
    "write_comparison_json",
]

EPSILON = 1.0  # floor for background-subtracted intensities

QUANT_CSV_COLUMNS = [
    "spot_id",
    "row",
    "col",
    "method",
    "red_intensity",
    "green_intensity",
    "level",
    "clamped",
    "q_sig_noise_r",
    "q_bkg1_r",
    "q_bkg2_r",
    "q_com2_r",
    "q_com2_g",
    "q_index",
]


class EmptyClassError(ValueError):
    """A mask class (foreground or background) has no pixels."""


class UndefinedCvError(ValueError):
    """b_mean is zero while b_sd is not; the variation ratio is undefined."""


class DegeneratePlateError(ValueError):
    """Plate-wide background statistics are all zero; scores are undefined."""


@dataclass(frozen=True)
class SpotStats:
    """Foreground/background means and background spread for one channel."""

    f_mean: float
    b_mean: float
    b_sd: float
    n_fg: int
    n_bg: int


@dataclass(frozen=True)
class PlateContext:
    """Plate-wide normalizers for the background quality terms."""

    bkg0: float  # pooled mean of all background pixels on the plate
    max_cv: float  # max over spots of b_sd / b_mean
    max_lvl: float  # max over spots of bkg0 / (bkg0 + b_mean)


@dataclass(frozen=True)
class ExpressionRecord:
    spot_id: int
    row: int
    col: int
    method: str
    red_intensity: float
    green_intensity: float
    level: float
    clamped: bool
    q_sig_noise_r: float
    q_bkg1_r: float
    q_bkg2_r: float
    q_com2_r: float
    q_com2_g: float
    q_index: float


@dataclass(frozen=True)
class MethodSummary:
    method: str
    n_spots: int
    min_level: float
    max_level: float
    mean_level: float
    mean_q_index: float


@dataclass(frozen=True)
class ComparisonReport:
    records: tuple[ExpressionRecord, ...]
    summaries: tuple[MethodSummary, ...]


def stats_from_values(fg: np.ndarray, bg: np.ndarray) -> SpotStats:
    """Build stats from explicit pixel-value samples.

    b_sd is the population standard deviation, which stays defined down to a
    single background pixel.
    """
    fg = np.asarray(fg, dtype=np.float64).ravel()
    bg = np.asarray(bg, dtype=np.float64).ravel()
    if fg.size == 0:
        raise EmptyClassError("foreground class has no pixels")
    if bg.size == 0:
        raise EmptyClassError("background class has no pixels")
    return SpotStats(
        f_mean=float(fg.mean()),
        b_mean=float(bg.mean()),
        b_sd=float(bg.std()),
        n_fg=int(fg.size),
        n_bg=int(bg.size),
    )


def _guard_distances(spot: SpotRegion) -> np.ndarray:
    ys, xs = np.mgrid[0 : spot.red.height, 0 : spot.red.width]
    return np.hypot(xs - float(spot.circle.u), ys - float(spot.circle.v))


def spot_stats(spot: SpotRegion, seg: SpotSegmentation, channel: str) -> SpotStats:
    """Class means over one channel of the window.

    Foreground is the mask; background is every unmasked pixel farther than
    r + 1 from the circle center. The 1-px guard annulus holds mixed edge
    pixels and is excluded from both classes.
    """
    window = spot.red if channel == "red" else spot.green
    values = window.as_float()
    dist = _guard_distances(spot)
    fg = values[seg.mask.mask]
    bg = values[~seg.mask.mask & (dist > spot.circle.r + GUARD_WIDTH)]
    return stats_from_values(fg, bg)


def plate_context(stats: Iterable[SpotStats]) -> PlateContext:
    """First-pass reduction over all spots of one channel."""
    stats = list(stats)
    if not stats:
        raise ValueError("no spot statistics supplied")
    total_bg = sum(s.b_mean * s.n_bg for s in stats)
    count_bg = sum(s.n_bg for s in stats)
    bkg0 = total_bg / count_bg if count_bg else 0.0
    max_cv = max(_cv(s) for s in stats)
    max_lvl = max(bkg0 / (bkg0 + s.b_mean) if bkg0 + s.b_mean > 0 else 0.0 for s in stats)
    return PlateContext(bkg0=bkg0, max_cv=max_cv, max_lvl=max_lvl)


def _cv(s: SpotStats) -> float:
    if s.b_sd == 0.0:
        return 0.0
    if s.b_mean == 0.0:
        raise UndefinedCvError("b_mean=0 with b_sd>0")
    return s.b_sd / s.b_mean


def expression_level(
    red: SpotStats, green: SpotStats
) -> tuple[float, float, float, bool]:
    """Background-subtracted intensities and their log2 ratio.

    Returns (red_intensity, green_intensity, level, clamped); intensities
    are floored at EPSILON so the ratio and log stay finite.
    """
    raw_r = red.f_mean - red.b_mean
    raw_g = green.f_mean - green.b_mean
    clamped = raw_r < EPSILON or raw_g < EPSILON
    ri = max(raw_r, EPSILON)
    gi = max(raw_g, EPSILON)
    return ri, gi, math.log2(ri / gi), clamped


def q_sig_noise(s: SpotStats) -> float:
    """F / (F + B); 0 when both means are zero."""
    denom = s.f_mean + s.b_mean
    return s.f_mean / denom if denom > 0 else 0.0


def q_bkg1(s: SpotStats, ctx: PlateContext) -> float:
    """Background-variability score: 1 - cv / max-plate-cv (1 when flat)."""
    cv = _cv(s)
    if ctx.max_cv == 0.0:
        return 1.0
    return 1.0 - cv / ctx.max_cv


def q_bkg2(s: SpotStats, ctx: PlateContext) -> float:
    """Background-level score: [bkg0/(bkg0+B)] / max-plate-level."""
    if ctx.max_lvl <= 0.0:
        raise DegeneratePlateError("all background levels on the plate are zero")
    lvl = ctx.bkg0 / (ctx.bkg0 + s.b_mean)
    return lvl / ctx.max_lvl


def q_com2(q1: float, q2: float, q3: float) -> float:
    """Geometric mean of the three sub-scores."""
    return (q1 * q2 * q3) ** (1.0 / 3.0)


def q_index(red_q_com2: float, green_q_com2: float) -> float:
    """Arithmetic mean of the two channels' combined scores."""
    return (red_q_com2 + green_q_com2) / 2.0


def segment_one(
    spot: SpotRegion,
    method: str,
    margin_model: MarginModel | None = None,
    r_fixed: int | None = None,
    kmeans_channel: str = "red",
) -> SpotSegmentation:
    """Dispatch one spot to the named segmentation method."""
    if method == "cht":
        return segment_cht(spot)
    if method == "kmeans":
        return segment_kmeans(spot, channel=kmeans_channel)
    if method == "svm":
        if margin_model is None:
            raise ValueError("svm segmentation requires a trained margin model")
        return segment_svm(spot, margin_model, channel=kmeans_channel)
    if method == "fixed":
        if r_fixed is None:
            raise ValueError("fixed segmentation requires r_fixed")
        return segment_fixed_circle(spot, r_fixed)
    raise ValueError(f"unknown segmentation method {method!r}")


def _stats_or_empty(spot: SpotRegion, seg: SpotSegmentation, channel: str) -> SpotStats:
    # An empty foreground (possible for svm/kmeans on dead spots) is scored
    # as pure background rather than aborting the whole plate.
    try:
        return spot_stats(spot, seg, channel)
    except EmptyClassError as err:
        if "foreground" not in str(err):
            raise
        window = spot.red if channel == "red" else spot.green
        dist = _guard_distances(spot)
        bg = window.as_float()[~seg.mask.mask & (dist > spot.circle.r + GUARD_WIDTH)]
        base = stats_from_values(bg, bg)
        return SpotStats(f_mean=0.0, b_mean=base.b_mean, b_sd=base.b_sd, n_fg=0, n_bg=base.n_bg)


def quantify_spots(
    spots: Sequence[SpotRegion], segs: Sequence[SpotSegmentation], method: str
) -> list[ExpressionRecord]:
    """Score one method's segmentations over a whole plate.

    Plate context (pooled background, normalization maxima) is reduced in a
    first pass; per-spot records follow in grid order.
    """
    if len(spots) != len(segs):
        raise ValueError("spots and segmentations differ in length")
    stats_r = [_stats_or_empty(s, g, "red") for s, g in zip(spots, segs)]
    stats_g = [_stats_or_empty(s, g, "green") for s, g in zip(spots, segs)]
    ctx_r = plate_context(stats_r)
    ctx_g = plate_context(stats_g)
    records = []
    for i, (spot, sr, sg) in enumerate(zip(spots, stats_r, stats_g)):
        ri, gi, level, clamped = expression_level(sr, sg)
        qc_r = q_com2(q_sig_noise(sr), q_bkg1(sr, ctx_r), q_bkg2(sr, ctx_r))
        qc_g = q_com2(q_sig_noise(sg), q_bkg1(sg, ctx_g), q_bkg2(sg, ctx_g))
        records.append(
            ExpressionRecord(
                spot_id=i,
                row=spot.row,
                col=spot.col,
                method=method,
                red_intensity=ri,
                green_intensity=gi,
                level=level,
                clamped=clamped,
                q_sig_noise_r=q_sig_noise(sr),
                q_bkg1_r=q_bkg1(sr, ctx_r),
                q_bkg2_r=q_bkg2(sr, ctx_r),
                q_com2_r=qc_r,
                q_com2_g=qc_g,
                q_index=q_index(qc_r, qc_g),
            )
        )
    return records


def compare_methods(
    plate: ChannelPair,
    grid: SpotGrid,
    methods: Sequence[str],
    margin_model: MarginModel | None = None,
    r_fixed: int | None = None,
    kmeans_channel: str = "red",
    margin: int = 4,
) -> ComparisonReport:
    """Quantify every spot under each method and summarize per method.

    The fixed-circle radius defaults to the median radius of the grid's
    circles when not supplied.
    """
    if r_fixed is None:
        r_fixed = int(np.floor(np.median([c.circle.r for c in grid.cells]) + 0.5))
    spots = [
        extract_spot(plate, grid, cell.row, cell.col, margin=margin)
        for cell in grid.cells
    ]
    records: list[ExpressionRecord] = []
    summaries: list[MethodSummary] = []
    for method in methods:
        segs = [
            segment_one(
                s,
                method,
                margin_model=margin_model,
                r_fixed=r_fixed,
                kmeans_channel=kmeans_channel,
            )
            for s in spots
        ]
        method_records = quantify_spots(spots, segs, method)
        levels = [r.level for r in method_records]
        summaries.append(
            MethodSummary(
                method=method,
                n_spots=len(method_records),
                min_level=min(levels),
                max_level=max(levels),
                mean_level=float(np.mean(levels)),
                mean_q_index=float(np.mean([r.q_index for r in method_records])),
            )
        )
        records.extend(method_records)
    return ComparisonReport(records=tuple(records), summaries=tuple(summaries))


def write_quant_csv(records: Iterable[ExpressionRecord], path) -> None:
    """Write records in the documented quant.csv schema ('.' decimals, LF)."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(QUANT_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.spot_id,
                    r.row,
                    r.col,
                    r.method,
                    repr(r.red_intensity),
                    repr(r.green_intensity),
                    repr(r.level),
                    int(r.clamped),
                    repr(r.q_sig_noise_r),
                    repr(r.q_bkg1_r),
                    repr(r.q_bkg2_r),
                    repr(r.q_com2_r),
                    repr(r.q_com2_g),
                    repr(r.q_index),
                ]
            )


def write_comparison_json(
    report: ComparisonReport, path, extra: Mapping[str, object] | None = None
) -> None:
    """Write per-method summaries (and optional extra scores) as JSON."""
    payload: dict[str, object] = {
        "summaries": [asdict(s) for s in report.summaries],
    }
    if extra:
        payload.update(extra)
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

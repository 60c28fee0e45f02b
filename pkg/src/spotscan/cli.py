"""Command-line pipeline: synth -> detect -> segment -> quantify -> compare.

Stages communicate through on-disk artifacts (TIFF/PNG/CSV/JSON) so each one
can be inspected and re-run on its own. Every command echoes its full
effective configuration into the output directory, and all outputs are
overwritten atomically, so identical configs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image

from . import synth as synth_mod
from . import tiff as tiff_mod
from .edge_detect import CannyParams
from .grid_segment import (
    GridCell,
    GridSpec,
    MarginModel,
    SpotGrid,
    SpotSegmentation,
    assign_grid,
    extract_spot,
    stitch_masks,
    train_margin_classifier,
)
from .hough_circle import Circle, ChtParams, detect_circles
from .image_core import (
    BinaryMap,
    ChannelPair,
    GrayImage,
    load_gray_tiff,
    overlay_circles,
    read_mask_png,
)
from .preprocess import MedianParams, median_filter
from .quantify import (
    ExpressionRecord,
    compare_methods,
    quantify_spots,
    segment_one,
    write_comparison_json,
    write_quant_csv,
)

VALID_METHODS = ("cht", "kmeans", "svm", "fixed")

# everything the default svm model is trained on is pinned here
_SVM_TRAIN_SEED = 20240817


class UsageError(Exception):
    """Bad invocation (missing inputs, malformed config); exits with code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of every stage; one file configures a whole run."""

    red: str | None = None
    green: str | None = None
    out: str | None = None
    grid_rows: int = 21
    grid_cols: int = 24
    rmin: int = 6
    rmax: int = 10
    median_window: int = 3
    canny_high: float = 0.8
    canny_low: float = 0.4
    peak_threshold: float = 0.5
    min_separation: int | None = None
    bidirectional: bool = True
    margin: int = 4
    methods: str = "cht"
    fixed_radius: int | None = None
    kmeans_channel: str = "red"
    svm_train_csv: str | None = None
    seed: int = 0
    # synthetic-plate knobs
    pitch: int = 30
    fg_lo: int = 2000
    fg_hi: int = 4000
    background: int = 500
    noise_sigma: float = 0.0
    dropout: float = 0.0
    jitter: int = 2
    bit_depth: int = 16
    profile: str = "flat"

    def method_list(self) -> list[str]:
        names = [m.strip() for m in self.methods.split(",") if m.strip()]
        bad = [m for m in names if m not in VALID_METHODS]
        if bad or not names:
            raise UsageError(
                f"invalid methods {self.methods!r}; choose from {','.join(VALID_METHODS)}"
            )
        return names

    def canny_params(self) -> CannyParams:
        return CannyParams(low_frac=self.canny_low, high_frac=self.canny_high)

    def cht_params(self) -> ChtParams:
        return ChtParams(
            r_min=self.rmin,
            r_max=self.rmax,
            peak_threshold_frac=self.peak_threshold,
            min_center_separation=self.min_separation,
            bidirectional=self.bidirectional,
        )

    def synth_params(self) -> synth_mod.SynthParams:
        return synth_mod.SynthParams(
            rows=self.grid_rows,
            cols=self.grid_cols,
            pitch=self.pitch,
            r_lo=self.rmin,
            r_hi=self.rmax,
            fg_lo=self.fg_lo,
            fg_hi=self.fg_hi,
            background=self.background,
            noise_sigma=self.noise_sigma,
            dropout=self.dropout,
            jitter=self.jitter,
            seed=self.seed,
            bit_depth=self.bit_depth,
            profile=self.profile,
        )


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults <- config file <- explicit CLI flags, in that order."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise UsageError(f"config file {path} is not valid JSON: {err}") from err
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise UsageError(f"unknown config keys in {path}: {', '.join(unknown)}")
        cfg = replace(cfg, **file_values)
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return replace(cfg, **overrides)


def _atomic_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_text(path: Path, text: str) -> None:
    _atomic_bytes(path, text.encode())


def _echo_config(cfg: RunConfig, out: Path) -> None:
    _atomic_text(out / "run_config.json", json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise UsageError("--out DIR is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_pair(cfg: RunConfig) -> ChannelPair:
    if not cfg.red or not cfg.green:
        raise UsageError("--red and --green TIFF paths are required")
    for p in (cfg.red, cfg.green):
        if not Path(p).is_file():
            raise UsageError(f"input image not found: {p}")
    return ChannelPair(red=load_gray_tiff(cfg.red), green=load_gray_tiff(cfg.green))


def _luminance(pair: ChannelPair) -> GrayImage:
    # detection runs on the per-pixel mean of the channels so a spot dim in
    # one dye still casts edges
    mean = (
        pair.red.pixels.astype(np.int64) + pair.green.pixels.astype(np.int64) + 1
    ) // 2
    return GrayImage(mean.astype(pair.red.pixels.dtype), bit_depth=pair.red.bit_depth)


def _save_image_atomic(save, path: Path, fmt: str) -> None:
    buf = io.BytesIO()
    save(buf, fmt)
    _atomic_bytes(path, buf.getvalue())


def _write_png_atomic(mask: BinaryMap, path: Path) -> None:
    img = Image.fromarray(np.where(mask.mask, 255, 0).astype(np.uint8), mode="L")
    _save_image_atomic(lambda buf, fmt: img.save(buf, fmt), path, "PNG")


def _grid_csv(grid: SpotGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "col", "u", "v", "r", "provenance"])
    for cell in grid.cells:
        c = cell.circle
        writer.writerow([cell.row, cell.col, c.u, c.v, c.r, cell.provenance])
    return buf.getvalue()


def _read_grid_csv(path: Path, image_size: tuple[int, int]) -> SpotGrid:
    if not path.is_file():
        raise UsageError(f"grid file not found: {path} (run the detect stage first)")
    cells = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            cells.append(
                GridCell(
                    row=int(rec["row"]),
                    col=int(rec["col"]),
                    circle=Circle(u=int(rec["u"]), v=int(rec["v"]), r=int(rec["r"])),
                    provenance=rec["provenance"],
                )
            )
    if not cells:
        raise UsageError(f"grid file {path} is empty")
    rows = max(c.row for c in cells) + 1
    cols = max(c.col for c in cells) + 1
    cells.sort(key=lambda c: (c.row, c.col))
    return SpotGrid(
        spec=GridSpec(rows=rows, cols=cols),
        cells=tuple(cells),
        image_width=image_size[0],
        image_height=image_size[1],
    )


def _margin_model(cfg: RunConfig) -> MarginModel:
    if cfg.svm_train_csv:
        path = Path(cfg.svm_train_csv)
        if not path.is_file():
            raise UsageError(f"svm training csv not found: {path}")
        samples = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                samples.append(
                    ((float(rec["intensity"]), float(rec["radial"])), int(rec["label"]))
                )
        return train_margin_classifier(samples, seed=cfg.seed)
    train_plate = synth_mod.generate(
        synth_mod.SynthParams(
            rows=4, cols=4, noise_sigma=150.0, seed=_SVM_TRAIN_SEED
        )
    )
    return train_margin_classifier(synth_mod.margin_training_set(train_plate), seed=0)


def _mask_path(out: Path, method: str, row: int, col: int) -> Path:
    return out / "masks" / method / f"spot_r{row:02d}c{col:02d}.png"


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg)
    plate = synth_mod.generate(cfg.synth_params())

    for name, img in (("red.tif", plate.channels.red), ("green.tif", plate.channels.green)):
        _atomic_bytes(out / name, tiff_mod.encode_gray(img.pixels, img.bit_depth))
    _write_png_atomic(plate.truth_masks[0], out / "truth_mask_red.png")
    _write_png_atomic(plate.truth_masks[1], out / "truth_mask_green.png")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "col", "present", "u", "v", "r", "fg_red", "fg_green", "level"])
    for (row, col), circle in sorted(plate.truth_circles.items()):
        if circle is None:
            writer.writerow([row, col, 0, "", "", "", "", "", ""])
        else:
            fg_r, fg_g = plate.truth_foreground[(row, col)]
            level = plate.truth_expression[(row, col)]
            writer.writerow([row, col, 1, circle.u, circle.v, circle.r, fg_r, fg_g, repr(level)])
    _atomic_text(out / "truth.csv", buf.getvalue())
    _echo_config(cfg, out)
    n = sum(1 for c in plate.truth_circles.values() if c is not None)
    print(f"synth: wrote {plate.params.width}x{plate.params.height} plate with {n} spots to {out}")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg)
    pair = _load_pair(cfg)
    smoothed = median_filter(_luminance(pair), MedianParams(window=cfg.median_window))
    circles = detect_circles(smoothed, cfg.canny_params(), cfg.cht_params())
    grid = assign_grid(
        circles, GridSpec(rows=cfg.grid_rows, cols=cfg.grid_cols), (pair.width, pair.height)
    )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["spot_id", "u", "v", "r", "support"])
    for i, c in enumerate(circles):
        writer.writerow([i, c.u, c.v, c.r, c.support])
    _atomic_text(out / "circles.csv", buf.getvalue())
    _atomic_text(out / "grid.csv", _grid_csv(grid))

    tmp = out / "overlay.png.tmp"
    overlay_circles(smoothed, [cell.circle for cell in grid.cells], tmp)
    os.replace(tmp, out / "overlay.png")
    _echo_config(cfg, out)
    detected = sum(1 for cell in grid.cells if cell.provenance == "detected")
    print(
        f"detect: {len(circles)} circles, grid {cfg.grid_rows}x{cfg.grid_cols} "
        f"({detected} detected, {len(grid.cells) - detected} interpolated) -> {out}"
    )
    return 0


def cmd_segment(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg)
    pair = _load_pair(cfg)
    grid = _read_grid_csv(Path(getattr(args, "grid", None) or out / "grid.csv"), (pair.width, pair.height))
    methods = cfg.method_list()
    model = _margin_model(cfg) if "svm" in methods else None
    r_fixed = cfg.fixed_radius
    if r_fixed is None:
        r_fixed = int(np.floor(np.median([c.circle.r for c in grid.cells]) + 0.5))

    for method in methods:
        (out / "masks" / method).mkdir(parents=True, exist_ok=True)
    count = 0
    for cell in grid.cells:
        spot = extract_spot(pair, grid, cell.row, cell.col, margin=cfg.margin)
        for method in methods:
            seg = segment_one(
                spot,
                method,
                margin_model=model,
                r_fixed=r_fixed,
                kmeans_channel=cfg.kmeans_channel,
            )
            _write_png_atomic(seg.mask, _mask_path(out, method, cell.row, cell.col))
            count += 1
    _echo_config(cfg, out)
    print(f"segment: wrote {count} masks ({','.join(methods)}) -> {out / 'masks'}")
    return 0


def cmd_quantify(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg)
    pair = _load_pair(cfg)
    grid = _read_grid_csv(out / "grid.csv", (pair.width, pair.height))
    methods = cfg.method_list()
    for method in methods:
        mdir = out / "masks" / method
        if not mdir.is_dir():
            raise UsageError(
                f"no masks for method {method!r} under {out / 'masks'} (run the segment stage first)"
            )

    records: list[ExpressionRecord] = []
    for method in methods:
        spots, segs = [], []
        for cell in grid.cells:
            spot = extract_spot(pair, grid, cell.row, cell.col, margin=cfg.margin)
            path = _mask_path(out, method, cell.row, cell.col)
            if not path.is_file():
                raise UsageError(f"missing mask {path}")
            mask = read_mask_png(path)
            if mask.width != spot.red.width or mask.height != spot.red.height:
                raise UsageError(
                    f"mask {path} is {mask.width}x{mask.height} but the window is "
                    f"{spot.red.width}x{spot.red.height}; wrong grid or margin"
                )
            spots.append(spot)
            segs.append(SpotSegmentation(mask=mask, method=method))
        records.extend(quantify_spots(spots, segs, method))
    tmp = out / "quant.csv.tmp"
    write_quant_csv(records, tmp)
    os.replace(tmp, out / "quant.csv")
    _echo_config(cfg, out)
    print(f"quantify: {len(records)} records -> {out / 'quant.csv'}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = _out_dir(cfg)
    pair = _load_pair(cfg)
    grid = _read_grid_csv(out / "grid.csv", (pair.width, pair.height))
    methods = cfg.method_list()
    model = _margin_model(cfg) if "svm" in methods else None
    report = compare_methods(
        pair,
        grid,
        methods,
        margin_model=model,
        r_fixed=cfg.fixed_radius,
        kmeans_channel=cfg.kmeans_channel,
        margin=cfg.margin,
    )

    scores: dict[str, dict[str, float]] = {}
    truth_path = Path(getattr(args, "truth_mask", None) or out / "truth_mask_red.png")
    if truth_path.is_file():
        truth = read_mask_png(truth_path)
        r_fixed = cfg.fixed_radius
        if r_fixed is None:
            r_fixed = int(np.floor(np.median([c.circle.r for c in grid.cells]) + 0.5))
        for method in methods:
            regions = []
            for cell in grid.cells:
                spot = extract_spot(pair, grid, cell.row, cell.col, margin=cfg.margin)
                seg = segment_one(
                    spot,
                    method,
                    margin_model=model,
                    r_fixed=r_fixed,
                    kmeans_channel=cfg.kmeans_channel,
                )
                regions.append((spot, seg))
            stitched = stitch_masks(pair.width, pair.height, regions)
            s = synth_mod.score_segmentation(stitched, truth)
            scores[method] = {
                "precision": s.precision,
                "recall": s.recall,
                "f1": s.f1,
                "accuracy": s.accuracy,
            }

    tmp = out / "comparison.csv.tmp"
    write_quant_csv(report.records, tmp)
    os.replace(tmp, out / "comparison.csv")
    tmp = out / "comparison.json.tmp"
    write_comparison_json(report, tmp, extra={"segmentation_scores": scores} if scores else None)
    os.replace(tmp, out / "comparison.json")
    _echo_config(cfg, out)
    for s in report.summaries:
        line = f"compare[{s.method}]: level {s.min_level:+.4f}..{s.max_level:+.4f} mean_q_index {s.mean_q_index:.4f}"
        if s.method in scores:
            line += f" f1 {scores[s.method]['f1']:.4f}"
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spotscan",
        description="Microarray spot localization, segmentation, and quantification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--red", help="red-channel TIFF")
        p.add_argument("--green", help="green-channel TIFF")
        p.add_argument("--grid-rows", dest="grid_rows", type=int)
        p.add_argument("--grid-cols", dest="grid_cols", type=int)
        p.add_argument("--rmin", type=int, help="minimum spot radius (pixels)")
        p.add_argument("--rmax", type=int, help="maximum spot radius (pixels)")
        p.add_argument("--median-window", dest="median_window", type=int)
        p.add_argument("--canny-high", dest="canny_high", type=float)
        p.add_argument("--canny-low", dest="canny_low", type=float)
        p.add_argument("--peak-threshold", dest="peak_threshold", type=float)
        p.add_argument("--min-separation", dest="min_separation", type=int)
        p.add_argument("--methods", help="comma list from: " + ",".join(VALID_METHODS))
        p.add_argument("--seed", type=int)
        p.add_argument("--margin", type=int, help="window margin around each spot")
        p.add_argument("--fixed-radius", dest="fixed_radius", type=int)
        p.add_argument("--kmeans-channel", dest="kmeans_channel", choices=["red", "green"])
        p.add_argument("--svm-train-csv", dest="svm_train_csv")

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark plate")
    add_common(p_synth)
    p_synth.add_argument("--pitch", type=int)
    p_synth.add_argument("--fg-lo", dest="fg_lo", type=int)
    p_synth.add_argument("--fg-hi", dest="fg_hi", type=int)
    p_synth.add_argument("--background", type=int)
    p_synth.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p_synth.add_argument("--dropout", type=float)
    p_synth.add_argument("--jitter", type=int)
    p_synth.add_argument("--bit-depth", dest="bit_depth", type=int, choices=[8, 16])
    p_synth.add_argument("--profile", choices=["flat", "gaussian"])
    p_synth.set_defaults(func=cmd_synth)

    p_detect = sub.add_parser("detect", help="locate spots and address the grid")
    add_common(p_detect)
    p_detect.set_defaults(func=cmd_detect)

    p_segment = sub.add_parser("segment", help="write per-spot masks for each method")
    add_common(p_segment)
    p_segment.add_argument("--grid", help="grid.csv path (default: OUT/grid.csv)")
    p_segment.set_defaults(func=cmd_segment)

    p_quant = sub.add_parser("quantify", help="expression levels and quality scores")
    add_common(p_quant)
    p_quant.set_defaults(func=cmd_quantify)

    p_compare = sub.add_parser("compare", help="side-by-side method comparison")
    add_common(p_compare)
    p_compare.add_argument("--truth-mask", dest="truth_mask", help="ground-truth mask PNG")
    p_compare.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Two-channel microarray spot analysis via a gradient-constrained circular Hough transform."""

from .edge_detect import CannyParams, EdgeMap, GradientField, canny, sobel_gradients
from .grid_segment import (
    AddressingError,
    GridCell,
    GridSpec,
    MarginModel,
    SpotGrid,
    SpotRegion,
    SpotSegmentation,
    assign_grid,
    extract_spot,
    segment_cht,
    segment_fixed_circle,
    segment_kmeans,
    segment_svm,
    train_margin_classifier,
)
from .hough_circle import (
    Circle,
    CircleAccumulator,
    ChtParams,
    NoSupportError,
    detect_circles,
    estimate_radius,
    find_centers,
    vote,
)
from .image_core import (
    BinaryMap,
    ChannelPair,
    GrayImage,
    Rect,
    TiffParseError,
    TiffUnsupportedError,
    crop,
    load_gray_tiff,
    overlay_circles,
    read_mask_png,
    write_gray_tiff,
    write_mask_png,
)
from .preprocess import MedianParams, median_filter
from .quantify import (
    ExpressionRecord,
    PlateContext,
    SpotStats,
    compare_methods,
    expression_level,
    plate_context,
    q_bkg1,
    q_bkg2,
    q_com2,
    q_index,
    q_sig_noise,
    spot_stats,
)
from .synth import SynthParams, SyntheticPlate, generate, score_segmentation, truth_grid

__version__ = "0.1.0"

"""Median filter against a brute-force sorted-window oracle."""

import numpy as np
import pytest

from spotscan.image_core import GrayImage
from spotscan.preprocess import MedianParams, median_filter


def median_oracle(pixels, window):
    """Replicated-border median via explicit loops and sorted()."""
    h, w = pixels.shape
    half = window // 2
    out = np.zeros_like(pixels)
    for y in range(h):
        for x in range(w):
            vals = []
            for dy in range(-half, half + 1):
                for dx in range(-half, half + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    vals.append(pixels[yy, xx])
            out[y, x] = sorted(vals)[(window * window - 1) // 2]
    return out


def test_constant_image_unchanged():
    img = GrayImage(np.full((6, 6), 42, dtype=np.uint8))
    for w in (1, 3, 5):
        assert np.array_equal(median_filter(img, MedianParams(w)).pixels, img.pixels)


def test_single_impulse_removed():
    arr = np.zeros((5, 5), dtype=np.uint8)
    arr[2, 2] = 100
    out = median_filter(GrayImage(arr), MedianParams(3))
    assert (out.pixels == 0).all()


@pytest.mark.parametrize("window", [3, 5])
def test_matches_sorted_oracle_on_random_rasters(window):
    rng = np.random.default_rng(17)
    for _ in range(10):
        arr = rng.integers(0, 256, size=(16, 16)).astype(np.uint8)
        got = median_filter(GrayImage(arr), MedianParams(window)).pixels
        assert np.array_equal(got, median_oracle(arr, window))


def test_window_one_is_identity():
    rng = np.random.default_rng(19)
    arr = rng.integers(0, 65536, size=(7, 9))
    img = GrayImage(arr, bit_depth=16)
    out = median_filter(img, MedianParams(1))
    assert np.array_equal(out.pixels, img.pixels)


def test_even_window_rejected():
    with pytest.raises(ValueError, match="odd"):
        MedianParams(4)


def test_window_larger_than_image_rejected():
    img = GrayImage(np.zeros((3, 3), dtype=np.uint8))
    with pytest.raises(ValueError, match="exceeds image"):
        median_filter(img, MedianParams(5))


def test_output_range_within_input_range():
    rng = np.random.default_rng(23)
    arr = rng.integers(50, 180, size=(12, 12)).astype(np.uint8)
    out = median_filter(GrayImage(arr), MedianParams(5)).pixels
    assert out.min() >= arr.min()
    assert out.max() <= arr.max()


def test_permuting_one_window_keeps_its_center_output():
    # a 3x3 image with window 3: the center output only depends on the
    # multiset of the 9 values
    rng = np.random.default_rng(29)
    vals = rng.integers(0, 256, size=9).astype(np.uint8)
    center_outputs = set()
    for _ in range(10):
        rng.shuffle(vals)
        out = median_filter(GrayImage(vals.reshape(3, 3)), MedianParams(3))
        center_outputs.add(int(out.pixels[1, 1]))
    assert len(center_outputs) == 1


def test_does_not_mutate_input():
    arr = np.arange(25, dtype=np.uint8).reshape(5, 5)
    img = GrayImage(arr)
    before = img.pixels.copy()
    median_filter(img, MedianParams(3))
    assert np.array_equal(img.pixels, before)

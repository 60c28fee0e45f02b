"""Sobel and Canny behavior on analytic shapes plus structural invariants."""

import numpy as np
import pytest
from scipy import ndimage

from spotscan.edge_detect import CannyParams, canny, sobel_gradients
from spotscan.image_core import GrayImage

KX = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
KY = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=float)


def conv_oracle(pixels, kernel):
    """Direct correlation with replicated borders, explicit loops."""
    h, w = pixels.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += kernel[dy + 1, dx + 1] * float(pixels[yy, xx])
            out[y, x] = acc
    return out


def disk_image(size, u, v, r, fg=200, bg=20):
    ys, xs = np.mgrid[0:size, 0:size]
    arr = np.full((size, size), bg, dtype=np.uint8)
    arr[(xs - u) ** 2 + (ys - v) ** 2 <= r * r] = fg
    return GrayImage(arr, bit_depth=8)


def circle_locus(size, u, v, r):
    ys, xs = np.mgrid[0:size, 0:size]
    return np.floor(np.hypot(xs - u, ys - v) + 0.5).astype(int) == r


def chebyshev_within(a, b, dist=1):
    """Every true pixel of a lies within Chebyshev `dist` of a true pixel of b."""
    grown = ndimage.binary_dilation(b, np.ones((3, 3), bool), iterations=dist)
    return not (a & ~grown).any()


class TestSobel:
    def test_constant_image_zero_gradient(self):
        g = sobel_gradients(GrayImage(np.full((5, 5), 9, dtype=np.uint8)))
        assert (g.magnitude == 0).all()
        assert (g.angle == 0).all()

    def test_vertical_step(self):
        arr = np.zeros((8, 8), dtype=np.uint8)
        arr[:, 4:] = 100
        g = sobel_gradients(GrayImage(arr))
        interior = g.magnitude[1:-1, :]
        cols = np.nonzero(interior.max(axis=0))[0]
        assert set(cols) == {3, 4}  # the two columns bracketing the step
        assert np.allclose(g.angle[1:-1, 3:5], 0.0)  # gradient points +x

    def test_matches_loop_convolution_oracle(self):
        rng = np.random.default_rng(31)
        arr = rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
        g = sobel_gradients(GrayImage(arr))
        gx = conv_oracle(arr, KX)
        gy = conv_oracle(arr, KY)
        assert np.allclose(g.magnitude, np.hypot(gx, gy), atol=1e-9)
        expect_angle = np.arctan2(gy, gx)
        mag = np.hypot(gx, gy)
        assert np.allclose(
            np.where(mag > 0, g.angle, 0.0), np.where(mag > 0, expect_angle, 0.0), atol=1e-9
        )

    def test_too_small_image_rejected(self):
        with pytest.raises(ValueError, match="smaller than 3x3"):
            sobel_gradients(GrayImage(np.zeros((2, 5), dtype=np.uint8)))


class TestCanny:
    def test_constant_image_no_edges(self):
        em = canny(GrayImage(np.full((10, 10), 77, dtype=np.uint8)))
        assert not em.edges.any()

    @pytest.mark.parametrize("r", [6, 7, 8, 9, 10])
    def test_disk_edge_hugs_circle_locus(self, r):
        em = canny(disk_image(40, 20, 20, r))
        ideal = circle_locus(40, 20, 20, r)
        assert em.edges.any()
        assert chebyshev_within(em.edges, ideal)
        assert chebyshev_within(ideal, em.edges)

    def test_two_disks_two_components(self):
        arr = np.full((48, 80), 20, dtype=np.uint8)
        ys, xs = np.mgrid[0:48, 0:80]
        arr[(xs - 20) ** 2 + (ys - 24) ** 2 <= 64] = 200
        arr[(xs - 60) ** 2 + (ys - 24) ** 2 <= 64] = 200
        em = canny(GrayImage(arr))
        _, n = ndimage.label(em.edges, np.ones((3, 3), bool))
        assert n == 2

    def test_raising_high_frac_never_adds_edges(self):
        rng = np.random.default_rng(37)
        arr = np.clip(
            rng.normal(100, 25, size=(32, 32))
            + 80 * ((np.mgrid[0:32, 0:32][1] - 16) ** 2 + (np.mgrid[0:32, 0:32][0] - 16) ** 2 <= 49),
            0,
            255,
        ).astype(np.uint8)
        img = GrayImage(arr)
        previous = None
        for high in (0.5, 0.7, 0.8, 0.9, 0.97):
            edges = canny(img, CannyParams(low_frac=0.4, high_frac=high)).edges
            if previous is not None:
                assert not (edges & ~previous).any()  # subset of the looser run
            previous = edges

    def test_intensity_inversion_keeps_edges_flips_angles(self):
        img = disk_image(40, 20, 20, 8)
        inv = GrayImage(255 - img.pixels, bit_depth=8)
        em, em_inv = canny(img), canny(inv)
        assert np.array_equal(em.edges, em_inv.edges)
        ys, xs = np.nonzero(em.edges)
        delta = np.abs(em.angle[ys, xs] - em_inv.angle[ys, xs])
        delta = np.minimum(delta, 2 * np.pi - delta)
        assert np.allclose(delta, np.pi, atol=1e-9)

    def test_no_edge_pixel_beaten_along_gradient_direction(self):
        rng = np.random.default_rng(41)
        arr = np.clip(rng.normal(120, 40, size=(24, 24)), 0, 255).astype(np.uint8)
        img = GrayImage(arr)
        em = canny(img, CannyParams(low_frac=0.3, high_frac=0.6))
        g = sobel_gradients(img)
        offsets = {0: (1, 0), 1: (1, 1), 2: (0, 1), 3: (-1, 1)}
        a = np.degrees(g.angle) % 180.0
        for y, x in zip(*np.nonzero(em.edges)):
            deg = a[y, x]
            if deg <= 22.5 or deg > 157.5:
                b = 0
            elif deg <= 67.5:
                b = 1
            elif deg <= 112.5:
                b = 2
            else:
                b = 3
            dx, dy = offsets[b]
            for s in (1, -1):
                yy, xx = y + s * dy, x + s * dx
                if 0 <= yy < 24 and 0 <= xx < 24:
                    assert g.magnitude[yy, xx] <= g.magnitude[y, x]

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            CannyParams(low_frac=0.0)
        with pytest.raises(ValueError):
            CannyParams(high_frac=1.5)

    def test_edge_angles_defined_at_edges(self):
        em = canny(disk_image(40, 20, 20, 8))
        ys, xs = np.nonzero(em.edges)
        assert np.isfinite(em.angle[ys, xs]).all()

"""Raster model, TIFF codec, mask PNG, and overlay tests.

The TIFF oracle is dual-route: Pillow plus a minimal reference writer local
to this file, both independent of the library's codec.
"""

import struct

import numpy as np
import pytest
from PIL import Image

from spotscan.image_core import (
    BinaryMap,
    ChannelPair,
    GrayImage,
    Rect,
    TiffParseError,
    TiffUnsupportedError,
    circle_points,
    crop,
    load_gray_tiff,
    overlay_circles,
    read_mask_png,
    write_gray_tiff,
    write_mask_png,
)
from spotscan.hough_circle import Circle


def ref_write_tiff(path, array, byteorder="<", rows_per_strip=None, compression=1):
    """Reference baseline TIFF writer, deliberately structured differently:

    IFD first, one strip per rows_per_strip band, SHORT dimension tags.
    """
    h, w = array.shape
    bits = 8 * array.dtype.itemsize
    rows_per_strip = rows_per_strip or h
    strips = []
    for y0 in range(0, h, rows_per_strip):
        band = array[y0 : y0 + rows_per_strip]
        strips.append(np.ascontiguousarray(band, dtype=array.dtype.newbyteorder(byteorder)).tobytes())

    n_entries = 9
    ifd_size = 2 + 12 * n_entries + 4
    extra_offset = 8 + ifd_size
    extra = b""

    def pack_values(ftype, values):
        code = {3: "H", 4: "I"}[ftype]
        return struct.pack(byteorder + str(len(values)) + code, *values)

    def entry(tag, ftype, values):
        nonlocal extra, extra_offset
        raw = pack_values(ftype, values)
        if len(raw) <= 4:
            field = raw + b"\x00" * (4 - len(raw))
        else:
            field = struct.pack(byteorder + "I", extra_offset)
            extra += raw
            extra_offset += len(raw)
        return struct.pack(byteorder + "HHI", tag, ftype, len(values)) + field

    # strip offsets are known once the extra-value block size is final, so
    # lay out entries with placeholders first
    counts = [len(s) for s in strips]
    placeholder = [0] * len(strips)
    body = [
        (256, 3, [w]),
        (257, 3, [h]),
        (258, 3, [bits]),
        (259, 3, [compression]),
        (262, 3, [1]),
        (273, 4, placeholder),
        (277, 3, [1]),
        (278, 4, [rows_per_strip]),
        (279, 4, counts),
    ]
    for _ in range(2):  # second pass fills in real strip offsets
        extra = b""
        extra_offset = 8 + ifd_size
        entries = b"".join(entry(tag, t, vals) for tag, t, vals in body)
        data_start = 8 + ifd_size + len(extra)
        offsets = []
        pos = data_start
        for c in counts:
            offsets.append(pos)
            pos += c
        body[5] = (273, 4, offsets)
    header = (b"II" if byteorder == "<" else b"MM") + struct.pack(byteorder + "HI", 42, 8)
    ifd = struct.pack(byteorder + "H", n_entries) + entries + struct.pack(byteorder + "I", 0)
    path.write_bytes(header + ifd + extra + b"".join(strips))


class TestTiff:
    def test_reads_2x2_reference_file(self, tmp_path):
        f = tmp_path / "t.tif"
        ref_write_tiff(f, np.array([[0, 1], [2, 3]], dtype=np.uint8))
        img = load_gray_tiff(f)
        assert (img.width, img.height, img.bit_depth) == (2, 2, 8)
        assert img.pixels.ravel().tolist() == [0, 1, 2, 3]

    def test_big_endian_reads_identically(self, tmp_path):
        arr = np.array([[0, 1], [2, 3]], dtype=np.uint8)
        little, big = tmp_path / "le.tif", tmp_path / "be.tif"
        ref_write_tiff(little, arr, byteorder="<")
        ref_write_tiff(big, arr, byteorder=">")
        assert np.array_equal(load_gray_tiff(little).pixels, load_gray_tiff(big).pixels)

    def test_16bit_both_byte_orders(self, tmp_path):
        arr = np.array([[0, 1000], [40000, 65535]], dtype=np.uint16)
        for order in ("<", ">"):
            f = tmp_path / f"t{ord(order)}.tif"
            ref_write_tiff(f, arr, byteorder=order)
            img = load_gray_tiff(f)
            assert img.bit_depth == 16
            assert np.array_equal(img.pixels, arr)

    def test_multi_strip_layout(self, tmp_path):
        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, size=(7, 5)).astype(np.uint8)
        f = tmp_path / "strips.tif"
        ref_write_tiff(f, arr, rows_per_strip=2)
        assert np.array_equal(load_gray_tiff(f).pixels, arr)

    def test_reads_pillow_output(self, tmp_path):
        rng = np.random.default_rng(4)
        a8 = rng.integers(0, 256, size=(9, 11)).astype(np.uint8)
        a16 = rng.integers(0, 65536, size=(6, 4)).astype(np.uint16)
        f8, f16 = tmp_path / "p8.tif", tmp_path / "p16.tif"
        Image.fromarray(a8, mode="L").save(f8)
        Image.fromarray(a16).save(f16)
        assert np.array_equal(load_gray_tiff(f8).pixels, a8)
        assert np.array_equal(load_gray_tiff(f16).pixels, a16)

    def test_pillow_reads_our_output(self, tmp_path):
        rng = np.random.default_rng(5)
        arr = rng.integers(0, 65536, size=(8, 3)).astype(np.uint16)
        f = tmp_path / "ours.tif"
        write_gray_tiff(GrayImage(arr, 16), f, byteorder=">")
        assert np.array_equal(np.asarray(Image.open(f)), arr)

    @pytest.mark.parametrize("depth", [8, 16])
    @pytest.mark.parametrize("order", ["<", ">"])
    def test_round_trip_random_rasters(self, tmp_path, depth, order):
        rng = np.random.default_rng(depth + ord(order))
        for i in range(10):
            h, w = int(rng.integers(1, 20)), int(rng.integers(1, 20))
            arr = rng.integers(0, 2**depth, size=(h, w))
            img = GrayImage(arr, bit_depth=depth)
            f = tmp_path / f"rt{i}.tif"
            write_gray_tiff(img, f, byteorder=order)
            back = load_gray_tiff(f)
            assert back.bit_depth == depth
            assert np.array_equal(back.pixels, img.pixels)

    def test_empty_file_is_parse_error(self, tmp_path):
        f = tmp_path / "empty.tif"
        f.write_bytes(b"")
        with pytest.raises(TiffParseError, match="offset 0"):
            load_gray_tiff(f)

    def test_bad_byte_order_mark(self, tmp_path):
        f = tmp_path / "bad.tif"
        f.write_bytes(b"XX\x2a\x00\x08\x00\x00\x00")
        with pytest.raises(TiffParseError, match="offset 0"):
            load_gray_tiff(f)

    def test_bad_magic_names_offset(self, tmp_path):
        f = tmp_path / "magic.tif"
        f.write_bytes(b"II\x2b\x00\x08\x00\x00\x00")
        with pytest.raises(TiffParseError, match="offset 2"):
            load_gray_tiff(f)

    def test_ifd_offset_beyond_eof(self, tmp_path):
        f = tmp_path / "trunc.tif"
        f.write_bytes(b"II\x2a\x00\xff\x00\x00\x00")
        with pytest.raises(TiffParseError, match="IFD offset 255"):
            load_gray_tiff(f)

    def test_unsupported_compression_lists_tag(self, tmp_path):
        f = tmp_path / "lzw.tif"
        ref_write_tiff(f, np.zeros((2, 2), dtype=np.uint8), compression=5)
        with pytest.raises(TiffUnsupportedError, match="Compression=5"):
            load_gray_tiff(f)


class TestGrayImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            GrayImage(np.array([[300]]), bit_depth=8)

    def test_rejects_bad_depth(self):
        with pytest.raises(ValueError, match="bit_depth"):
            GrayImage(np.zeros((2, 2), dtype=np.uint8), bit_depth=12)

    def test_pixels_are_read_only(self):
        img = GrayImage(np.zeros((2, 2), dtype=np.uint8))
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1

    def test_channel_pair_mismatch(self):
        a = GrayImage(np.zeros((2, 2), dtype=np.uint8))
        b = GrayImage(np.zeros((3, 2), dtype=np.uint8))
        with pytest.raises(ValueError, match="channel mismatch"):
            ChannelPair(red=a, green=b)


class TestCrop:
    def test_full_rect_is_identity(self):
        img = GrayImage(np.arange(12).reshape(3, 4) % 256, bit_depth=8)
        out = crop(img, Rect(0, 0, 4, 3))
        assert np.array_equal(out.pixels, img.pixels)

    def test_center_window_of_3x3(self):
        img = GrayImage(np.arange(1, 10).reshape(3, 3), bit_depth=8)
        out = crop(img, Rect(1, 1, 2, 2))
        assert out.pixels.ravel().tolist() == [5, 6, 8, 9]

    def test_out_of_bounds_rect(self):
        img = GrayImage(np.zeros((3, 3), dtype=np.uint8))
        with pytest.raises(ValueError, match="exceeds image"):
            crop(img, Rect(0, 0, 4, 4))

    def test_crop_composition(self):
        rng = np.random.default_rng(7)
        img = GrayImage(rng.integers(0, 256, size=(12, 15)), bit_depth=8)
        for _ in range(20):
            ax, ay = int(rng.integers(0, 6)), int(rng.integers(0, 5))
            aw, ah = int(rng.integers(4, 10)), int(rng.integers(4, 8))
            a = Rect(ax, ay, aw, ah)
            bx, by = int(rng.integers(0, aw - 2)), int(rng.integers(0, ah - 2))
            bw, bh = int(rng.integers(1, aw - bx + 1)), int(rng.integers(1, ah - by + 1))
            b = Rect(bx, by, bw, bh)
            composed = Rect(ax + bx, ay + by, bw, bh)
            assert np.array_equal(
                crop(crop(img, a), b).pixels, crop(img, composed).pixels
            )

    def test_does_not_mutate_input(self):
        img = GrayImage(np.arange(9).reshape(3, 3), bit_depth=8)
        before = img.pixels.copy()
        crop(img, Rect(1, 1, 2, 2))
        assert np.array_equal(img.pixels, before)


class TestMaskPng:
    def test_round_trip_random(self, tmp_path):
        rng = np.random.default_rng(11)
        for i in range(5):
            m = BinaryMap(rng.random((6, 9)) > 0.5)
            f = tmp_path / f"m{i}.png"
            write_mask_png(m, f)
            assert np.array_equal(read_mask_png(f).mask, m.mask)

    def test_all_zero_mask_decodes_to_zeros(self, tmp_path):
        f = tmp_path / "z.png"
        write_mask_png(BinaryMap(np.zeros((4, 4), dtype=bool)), f)
        arr = np.asarray(Image.open(f))
        assert arr.shape == (4, 4)
        assert (arr == 0).all()

    def test_checkerboard_round_trip(self, tmp_path):
        m = BinaryMap(np.indices((2, 2)).sum(axis=0) % 2 == 0)
        f = tmp_path / "c.png"
        write_mask_png(m, f)
        assert np.array_equal(read_mask_png(f).mask, m.mask)

    def test_signal_encoded_as_255(self, tmp_path):
        f = tmp_path / "s.png"
        write_mask_png(BinaryMap(np.ones((2, 2), dtype=bool)), f)
        assert (np.asarray(Image.open(f)) == 255).all()


def midpoint_circle_oracle(u, v, r):
    # classic 8-octant walk, written independently of the library routine
    pts = set()
    x, y, d = r, 0, 3 - 2 * r
    while y <= x:
        for sx, sy in ((x, y), (y, x)):
            pts.update(
                {(u + sx, v + sy), (u - sx, v + sy), (u + sx, v - sy), (u - sx, v - sy)}
            )
        if d < 0:
            d += 4 * y + 6
        else:
            d += 4 * (y - x) + 10
            x -= 1
        y += 1
    return pts


class TestOverlay:
    def test_empty_circle_list_replicates_grayscale(self, tmp_path):
        rng = np.random.default_rng(13)
        img = GrayImage(rng.integers(0, 256, size=(8, 10)), bit_depth=8)
        f = tmp_path / "o.png"
        overlay_circles(img, [], f)
        rgb = np.asarray(Image.open(f))
        for c in range(3):
            assert np.array_equal(rgb[:, :, c], img.pixels)

    def test_single_circle_green_at_locus(self, tmp_path):
        img = GrayImage(np.zeros((32, 32), dtype=np.uint8))
        f = tmp_path / "c.png"
        overlay_circles(img, [Circle(u=10, v=10, r=5)], f)
        rgb = np.asarray(Image.open(f))
        green = set(zip(*np.nonzero((rgb == [0, 255, 0]).all(axis=2))[::-1]))
        assert green == midpoint_circle_oracle(10, 10, 5)

    def test_clipped_circle_does_not_crash(self, tmp_path):
        img = GrayImage(np.zeros((16, 16), dtype=np.uint8))
        f = tmp_path / "clip.png"
        overlay_circles(img, [Circle(u=1, v=1, r=6)], f)
        rgb = np.asarray(Image.open(f))
        assert rgb.shape == (16, 16, 3)

    def test_library_locus_matches_oracle(self):
        for r in (0, 1, 5, 9):
            assert set(circle_points(20, 20, r)) == (
                midpoint_circle_oracle(20, 20, r) if r else {(20, 20)}
            )

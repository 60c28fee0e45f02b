"""Baseline TIFF 6.0 subset codec: uncompressed strips, single-channel gray, 8/16 bit.

Anything outside that subset (compression, color, tiles, planar layouts) is
rejected with :class:`TiffUnsupportedError` rather than guessed at.
"""

from __future__ import annotations

import struct

import numpy as np

# Tag ids of the baseline subset we understand.
TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279

_TAG_NAMES = {
    TAG_IMAGE_WIDTH: "ImageWidth",
    TAG_IMAGE_LENGTH: "ImageLength",
    TAG_BITS_PER_SAMPLE: "BitsPerSample",
    TAG_COMPRESSION: "Compression",
    TAG_PHOTOMETRIC: "PhotometricInterpretation",
    TAG_STRIP_OFFSETS: "StripOffsets",
    TAG_SAMPLES_PER_PIXEL: "SamplesPerPixel",
    TAG_ROWS_PER_STRIP: "RowsPerStrip",
    TAG_STRIP_BYTE_COUNTS: "StripByteCounts",
}

# field type -> (struct code, byte size); BYTE, SHORT, LONG
_FIELD_TYPES = {1: ("B", 1), 3: ("H", 2), 4: ("I", 4)}


class TiffParseError(ValueError):
    """Structurally malformed file; the message names the offending offset."""


class TiffUnsupportedError(ValueError):
    """Well-formed TIFF using a feature outside the baseline gray subset."""


def _tag_name(tag: int) -> str:
    return _TAG_NAMES.get(tag, f"tag {tag}")


def decode_gray(data: bytes) -> tuple[np.ndarray, int]:
    """Decode TIFF bytes into (pixels[y, x], bit_depth).

    Returns the raw sample values in file order; PhotometricInterpretation 0
    and 1 are both accepted and neither triggers value inversion.
    """
    if len(data) < 8:
        raise TiffParseError(
            f"file too short for TIFF header at offset 0: {len(data)} bytes"
        )
    order = data[:2]
    if order == b"II":
        endian = "<"
    elif order == b"MM":
        endian = ">"
    else:
        raise TiffParseError(f"bad byte-order mark at offset 0: {order!r}")
    magic, ifd_offset = struct.unpack(endian + "HI", data[2:8])
    if magic != 42:
        raise TiffParseError(f"bad TIFF magic {magic} at offset 2")
    if ifd_offset + 2 > len(data):
        raise TiffParseError(f"IFD offset {ifd_offset} beyond end of file")

    (n_entries,) = struct.unpack_from(endian + "H", data, ifd_offset)
    entries_end = ifd_offset + 2 + 12 * n_entries
    if entries_end + 4 > len(data):
        raise TiffParseError(
            f"IFD at offset {ifd_offset} truncated ({n_entries} entries)"
        )

    entries: dict[int, tuple[int, int, bytes]] = {}
    for i in range(n_entries):
        pos = ifd_offset + 2 + 12 * i
        tag, ftype, count = struct.unpack_from(endian + "HHI", data, pos)
        entries[tag] = (ftype, count, data[pos + 8 : pos + 12])

    def values(tag: int) -> list[int]:
        ftype, count, field = entries[tag]
        if ftype not in _FIELD_TYPES:
            raise TiffUnsupportedError(
                f"{_tag_name(tag)}: unsupported field type {ftype}"
            )
        code, size = _FIELD_TYPES[ftype]
        total = size * count
        if total <= 4:
            raw = field[:total]  # value is left-justified in the field
        else:
            (off,) = struct.unpack(endian + "I", field)
            if off + total > len(data):
                raise TiffParseError(
                    f"{_tag_name(tag)} value at offset {off} beyond end of file"
                )
            raw = data[off : off + total]
        return list(struct.unpack(endian + str(count) + code, raw))

    def single(tag: int, default: int | None = None) -> int:
        if tag not in entries:
            if default is None:
                raise TiffParseError(f"missing required {_tag_name(tag)} tag")
            return default
        return values(tag)[0]

    width = single(TAG_IMAGE_WIDTH)
    height = single(TAG_IMAGE_LENGTH)
    if width < 1 or height < 1:
        raise TiffParseError(f"degenerate image dimensions {width}x{height}")

    compression = single(TAG_COMPRESSION, default=1)
    if compression != 1:
        raise TiffUnsupportedError(
            f"Compression={compression} not supported (only 1, uncompressed)"
        )
    photometric = single(TAG_PHOTOMETRIC, default=1)
    if photometric not in (0, 1):
        raise TiffUnsupportedError(
            f"PhotometricInterpretation={photometric} not supported (only 0/1, grayscale)"
        )
    samples = single(TAG_SAMPLES_PER_PIXEL, default=1)
    if samples != 1:
        raise TiffUnsupportedError(
            f"SamplesPerPixel={samples} not supported (only 1, single channel)"
        )
    if TAG_BITS_PER_SAMPLE in entries:
        bits_list = values(TAG_BITS_PER_SAMPLE)
        if len(set(bits_list)) != 1:
            raise TiffUnsupportedError(f"mixed BitsPerSample {bits_list}")
        bits = bits_list[0]
    else:
        bits = 1
    if bits not in (8, 16):
        raise TiffUnsupportedError(f"BitsPerSample={bits} not supported (only 8/16)")

    if TAG_STRIP_OFFSETS not in entries:
        raise TiffParseError("missing required StripOffsets tag")
    if TAG_STRIP_BYTE_COUNTS not in entries:
        raise TiffParseError("missing required StripByteCounts tag")
    offsets = values(TAG_STRIP_OFFSETS)
    counts = values(TAG_STRIP_BYTE_COUNTS)
    if len(offsets) != len(counts):
        raise TiffParseError(
            f"StripOffsets has {len(offsets)} entries but StripByteCounts {len(counts)}"
        )

    expected = width * height * (bits // 8)
    if sum(counts) != expected:
        raise TiffParseError(
            f"strip byte counts sum to {sum(counts)}, need {expected} "
            f"for {width}x{height}x{bits}bit"
        )
    chunks = []
    for off, cnt in zip(offsets, counts):
        if off + cnt > len(data):
            raise TiffParseError(f"strip at offset {off} ({cnt} bytes) beyond end of file")
        chunks.append(data[off : off + cnt])
    raw = b"".join(chunks)

    dtype = np.dtype(endian + ("u1" if bits == 8 else "u2"))
    pixels = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return pixels.astype(pixels.dtype.newbyteorder("=")), bits


def encode_gray(pixels: np.ndarray, bit_depth: int, byteorder: str = "<") -> bytes:
    """Encode a 2-D uint array as a single-strip baseline grayscale TIFF."""
    if byteorder not in ("<", ">"):
        raise ValueError(f"byteorder must be '<' or '>', got {byteorder!r}")
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    height, width = pixels.shape
    dtype = np.dtype(byteorder + ("u1" if bit_depth == 8 else "u2"))
    raw = np.ascontiguousarray(pixels, dtype=dtype).tobytes()

    data_offset = 8
    ifd_offset = data_offset + len(raw)

    def entry(tag: int, ftype: int, count: int, value: int) -> bytes:
        code, size = _FIELD_TYPES[ftype]
        field = struct.pack(byteorder + code, value)
        field += b"\x00" * (4 - len(field))
        return struct.pack(byteorder + "HHI", tag, ftype, count) + field

    entries = [
        entry(TAG_IMAGE_WIDTH, 4, 1, width),
        entry(TAG_IMAGE_LENGTH, 4, 1, height),
        entry(TAG_BITS_PER_SAMPLE, 3, 1, bit_depth),
        entry(TAG_COMPRESSION, 3, 1, 1),
        entry(TAG_PHOTOMETRIC, 3, 1, 1),
        entry(TAG_STRIP_OFFSETS, 4, 1, data_offset),
        entry(TAG_SAMPLES_PER_PIXEL, 3, 1, 1),
        entry(TAG_ROWS_PER_STRIP, 4, 1, height),
        entry(TAG_STRIP_BYTE_COUNTS, 4, 1, len(raw)),
    ]
    header = (b"II" if byteorder == "<" else b"MM") + struct.pack(
        byteorder + "HI", 42, ifd_offset
    )
    ifd = struct.pack(byteorder + "H", len(entries)) + b"".join(entries)
    ifd += struct.pack(byteorder + "I", 0)  # no next IFD
    return header + raw + ifd

"""8-bit raster images, binary PGM/PPM I/O, and resampling primitives.

Only the binary PNM flavours are supported: P5 (greyscale) and P6 (RGB),
both with maxval 255.  Header comments (``#`` to end of line) are
tolerated.  Files round-trip bit-exactly through :func:`read_image` /
:func:`write_image`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Image",
    "ImageFormatError",
    "Mask",
    "parse_image",
    "read_image",
    "resize_bilinear",
    "serialize_image",
    "to_grayscale",
    "upsample_mask_nearest",
    "write_image",
]


class ImageFormatError(ValueError):
    """Malformed PGM/PPM data.  ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit raster held as a ``(height, width, channels)`` uint8 array.

    ``channels`` is 1 (greyscale) or 3 (RGB).  The sample order is
    row-major, i.e. ``pixels.reshape(-1)`` walks the raster left to
    right, top to bottom, channel-interleaved.
    """

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.dtype != np.uint8 or p.ndim != 3:
            raise ValueError("pixels must be a (height, width, channels) uint8 array")
        h, w, c = p.shape
        if h < 1 or w < 1:
            raise ValueError(f"image dimensions must be positive, got {w}x{h}")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        if not p.flags.c_contiguous:
            object.__setattr__(self, "pixels", np.ascontiguousarray(p))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary retain/discard raster; ``bits`` is (height, width) uint8 of 0/1.

    One byte per pixel in memory; packing happens only on the wire.
    """

    bits: np.ndarray

    def __post_init__(self):
        b = self.bits
        if not isinstance(b, np.ndarray) or b.dtype != np.uint8 or b.ndim != 2:
            raise ValueError("bits must be a (height, width) uint8 array")
        if b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError("mask dimensions must be positive")
        if not bool(np.all(b <= 1)):
            raise ValueError("mask values must be 0 or 1")
        if not b.flags.c_contiguous:
            object.__setattr__(self, "bits", np.ascontiguousarray(b))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def ones_count(self) -> int:
        return int(self.bits.sum())


# --------------------------------------------------------------------------
# PGM (P5) / PPM (P6) codec
# --------------------------------------------------------------------------

_WHITESPACE = b" \t\r\n\x0b\x0c"


def _skip_separators(data: bytes, pos: int) -> int:
    """Advance past whitespace and '#' comments between header tokens."""
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch in (b"#",):
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch in _WHITESPACE:
            pos += 1
        else:
            break
    return pos


def _read_int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_separators(data, pos)
    start = pos
    while pos < len(data) and data[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        raise ImageFormatError(f"expected {what}, found no digits", start)
    return int(data[start:pos]), pos


def parse_image(data: bytes) -> Image:
    """Decode binary PGM/PPM bytes into an :class:`Image`."""
    if len(data) < 2 or data[:1] != b"P":
        raise ImageFormatError("not a PNM file: bad magic", 0)
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ImageFormatError(f"unsupported PNM magic {magic!r}; want P5 or P6", 0)

    width, pos = _read_int_token(data, 2, "width")
    height, pos = _read_int_token(data, pos, "height")
    maxval_at = _skip_separators(data, pos)
    maxval, pos = _read_int_token(data, pos, "maxval")
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad dimensions {width}x{height}", 2)
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 255", maxval_at)
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise ImageFormatError("expected single whitespace byte after maxval", pos)
    pos += 1

    need = width * height * channels
    have = len(data) - pos
    if have < need:
        raise ImageFormatError(
            f"truncated payload: need {need} sample bytes, have {have}", len(data)
        )
    if have > need:
        raise ImageFormatError(f"trailing data after {need} sample bytes", pos + need)
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return Image(pixels.reshape(height, width, channels).copy())


def serialize_image(image: Image) -> bytes:
    """Encode an :class:`Image` as canonical binary PGM/PPM bytes."""
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    return header + image.pixels.tobytes()


def read_image(path: str | Path) -> Image:
    """Read a binary PGM/PPM file.  Raises :class:`ImageFormatError` on bad data."""
    return parse_image(Path(path).read_bytes())


def write_image(image: Image, path: str | Path) -> None:
    """Write ``image`` as binary PGM (1 channel) or PPM (3 channels)."""
    Path(path).write_bytes(serialize_image(image))


# --------------------------------------------------------------------------
# Colour conversion and resampling
# --------------------------------------------------------------------------


def to_grayscale(image: Image) -> Image:
    """Collapse RGB to single-channel luma: round(0.299 R + 0.587 G + 0.114 B).

    Rounding is half-up.  Greyscale input is returned unchanged
    (idempotent).
    """
    if image.channels == 1:
        return image
    rgb = image.pixels.astype(np.float64)
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    gray = np.floor(luma + 0.5).astype(np.uint8)
    return Image(gray[:, :, np.newaxis])


def resize_bilinear(image: Image, out_width: int, out_height: int) -> Image:
    """Bilinear resample with half-pixel-centred coordinates.

    Source coordinates are clamped at the edges; output samples are
    rounded half-up back to uint8.  Output values never leave the input
    value range.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError(f"output dimensions must be positive, got {out_width}x{out_height}")
    h, w = image.height, image.width
    src = image.pixels.astype(np.float64)

    # Half-pixel centres: output centre k+0.5 maps to input (k+0.5)*scale.
    xs = np.clip((np.arange(out_width) + 0.5) * (w / out_width) - 0.5, 0.0, w - 1.0)
    ys = np.clip((np.arange(out_height) + 0.5) * (h / out_height) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[np.newaxis, :, np.newaxis]
    fy = (ys - y0)[:, np.newaxis, np.newaxis]

    top = src[y0[:, None], x0[None, :], :] * (1.0 - fx) + src[y0[:, None], x1[None, :], :] * fx
    bot = src[y1[:, None], x0[None, :], :] * (1.0 - fx) + src[y1[:, None], x1[None, :], :] * fx
    out = top * (1.0 - fy) + bot * fy
    return Image(np.floor(out + 0.5).astype(np.uint8))


def upsample_mask_nearest(mask: Mask, out_width: int, out_height: int) -> Mask:
    """Nearest-neighbour mask upsampling.

    ``out(x, y) = mask(floor(x * mask.width / out_width),
    floor(y * mask.height / out_height))``; requires the output to be at
    least as large as the mask on both axes.
    """
    if out_width < mask.width or out_height < mask.height:
        raise ValueError(
            f"output {out_width}x{out_height} smaller than mask {mask.width}x{mask.height}"
        )
    # Integer arithmetic keeps the index map exact.
    xs = (np.arange(out_width, dtype=np.int64) * mask.width) // out_width
    ys = (np.arange(out_height, dtype=np.int64) * mask.height) // out_height
    return Mask(mask.bits[ys[:, None], xs[None, :]])

"""Pixel buffers, binary PNM I/O, luma conversion, resizing and integral images."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadChannelCount,
    MaxvalNot255,
    RectOutOfBounds,
    TruncatedBody,
    UnsupportedMagic,
)

__all__ = [
    "PixelBuffer",
    "GrayImage",
    "IntegralImage",
    "Rect",
    "decode_pnm",
    "encode_pnm",
    "read_pnm",
    "write_pnm",
    "to_gray",
    "integral",
    "rect_sum",
    "resize",
]

_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PixelBuffer:
    """Interleaved 8-bit samples, shape ``(height, width, channels)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise BadChannelCount(f"expected 1 or 3 channels, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")
        object.__setattr__(self, "data", _frozen(data.astype(np.uint8, copy=False)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        return isinstance(other, PixelBuffer) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit luma plane, shape ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"gray image must be a non-empty 2-D array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.issubdtype(px.dtype, np.floating):
                px = np.floor(px + 0.5)
            px = np.clip(px, 0, 255).astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def luma(self) -> np.ndarray:
        """Row-major flat view of the samples."""
        return self.pixels.reshape(-1)

    def crop(self, r: "Rect") -> "GrayImage":
        if not r.inside(self.width, self.height):
            raise RectOutOfBounds(f"{r} outside {self.width}x{self.height}")
        return GrayImage(self.pixels[r.y:r.y + r.h, r.x:r.x + r.w])

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def inside(self, width: int, height: int) -> bool:
        return (self.w >= 1 and self.h >= 1 and self.x >= 0 and self.y >= 0
                and self.x + self.w <= width and self.y + self.h <= height)

    def iou(self, other: "Rect") -> float:
        ix = max(0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True, eq=False)
class IntegralImage:
    """Summed-area table with a zero first row and column.

    ``table[y, x]`` is the luma sum over ``[0, x) x [0, y)``, so the table has
    shape ``(height + 1, width + 1)``.
    """

    table: np.ndarray

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1


# --------------------------------------------------------------------- PNM

def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last token.
    """
    tokens = []
    i = 0
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i >= n:
            raise TruncatedBody("PNM header ended early")
        if data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        tokens.append(data[start:i])
    return tokens, i


def decode_pnm(data: bytes) -> PixelBuffer:
    """Decode a binary P5 (gray) or P6 (RGB) image with maxval 255."""
    magic = bytes(data[:2])
    if magic not in (b"P5", b"P6"):
        raise UnsupportedMagic(f"unsupported PNM magic {magic!r}")
    tokens, end = _header_tokens(data[2:], 3)
    end += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise TruncatedBody(f"malformed PNM header: {tokens!r}") from exc
    if maxval != 255:
        raise MaxvalNot255(f"maxval {maxval} unsupported (only 255)")
    if width < 1 or height < 1:
        raise TruncatedBody(f"bad dimensions {width}x{height}")
    if end >= len(data):
        raise TruncatedBody("missing PNM body")
    body_start = end + 1  # exactly one whitespace byte ends the header
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    body = data[body_start:body_start + size]
    if len(body) < size:
        raise TruncatedBody(f"expected {size} body bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return PixelBuffer(arr)


def encode_pnm(img: PixelBuffer | GrayImage) -> bytes:
    if isinstance(img, GrayImage):
        img = PixelBuffer(img.pixels)
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.data.tobytes()


def read_pnm(path: str | Path) -> PixelBuffer:
    return decode_pnm(Path(path).read_bytes())


def write_pnm(path: str | Path, img: PixelBuffer | GrayImage) -> None:
    Path(path).write_bytes(encode_pnm(img))


# ------------------------------------------------------------ conversions

def to_gray(buf: PixelBuffer | GrayImage) -> GrayImage:
    """BT.601 luma, rounded half-up. Gray input is returned unchanged."""
    if isinstance(buf, GrayImage):
        return buf
    if buf.channels == 1:
        return GrayImage(buf.data[:, :, 0].copy())
    if buf.channels != 3:
        raise BadChannelCount(f"cannot convert {buf.channels} channels")
    y = buf.data.astype(np.float64) @ _LUMA_WEIGHTS
    return GrayImage(np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8))


def integral(img: GrayImage) -> IntegralImage:
    table = np.zeros((img.height + 1, img.width + 1), dtype=np.uint64)
    np.cumsum(img.pixels, axis=0, dtype=np.uint64, out=table[1:, 1:])
    np.cumsum(table[1:, 1:], axis=1, dtype=np.uint64, out=table[1:, 1:])
    return IntegralImage(_frozen(table))


def rect_sum(ii: IntegralImage, r: Rect) -> int:
    if not r.inside(ii.width, ii.height):
        raise RectOutOfBounds(f"{r} outside {ii.width}x{ii.height}")
    t = ii.table
    x0, y0, x1, y1 = r.x, r.y, r.x + r.w, r.y + r.h
    return int(t[y1, x1]) - int(t[y1, x0]) - int(t[y0, x1]) + int(t[y0, x0])


def _sample_coords(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def resize(img: GrayImage, new_w: int, new_h: int) -> GrayImage:
    """Bilinear resize with centre-aligned sampling."""
    if new_w < 1 or new_h < 1:
        raise ValueError(f"target size must be >= 1, got {new_w}x{new_h}")
    if (new_w, new_h) == (img.width, img.height):
        return img
    src = img.pixels.astype(np.float64)
    x0, x1, fx = _sample_coords(img.width, new_w)
    y0, y1, fy = _sample_coords(img.height, new_h)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return GrayImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))

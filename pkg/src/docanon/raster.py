"""Pixel grids, PNM IO and the classical operators used by the detectors.

Borders are handled by edge replication everywhere.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .errors import RasterError
from .geometry import BBox, RedactionClass, Source


@dataclass(frozen=True, eq=False)
class Raster:
    """8-bit image, ``pixels`` shaped (h, w) for gray or (h, w, 3) for RGB."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim not in (2, 3) or (px.ndim == 3 and px.shape[2] != 3):
            raise RasterError(f"unsupported pixel array shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise RasterError("raster must be at least 1x1")
        if px is self.pixels:
            px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    @classmethod
    def blank(cls, width: int, height: int, value: int = 255, channels: int = 1) -> "Raster":
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(np.full(shape, value, dtype=np.uint8))

    def to_gray(self) -> "Raster":
        if self.channels == 1:
            return self
        # integer BT.601 luma, rounded
        p = self.pixels.astype(np.uint32)
        y = (299 * p[..., 0] + 587 * p[..., 1] + 114 * p[..., 2] + 500) // 1000
        return Raster(y.astype(np.uint8))

    def to_rgb(self) -> "Raster":
        if self.channels == 3:
            return self
        return Raster(np.repeat(self.pixels[:, :, None], 3, axis=2))


@dataclass(frozen=True, eq=False)
class GradientMap:
    values: np.ndarray  # int32, (h, w)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------- PNM IO

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pnm(data: bytes) -> Raster:
    """Decode binary P5 (gray) or P6 (RGB) with maxval 255."""
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise RasterError("malformed PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise RasterError(f"unsupported PNM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise RasterError("malformed PNM header") from None
    if width < 1 or height < 1:
        raise RasterError("PNM dimensions must be positive")
    if maxval != 255:
        raise RasterError(f"unsupported maxval {maxval}")
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise RasterError("malformed PNM header")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    payload = data[pos : pos + n]
    if len(payload) < n:
        raise RasterError(f"truncated PNM payload: expected {n} bytes, got {len(payload)}")
    px = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Raster(px.reshape(shape))


def write_pnm(img: Raster) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    return magic + b"\n%d %d\n255\n" % (img.width, img.height) + img.data


def read_image(path) -> Raster:
    with open(path, "rb") as fh:
        return read_pnm(fh.read())


def write_image(img: Raster, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(write_pnm(img))
    os.replace(tmp, path)


# ---------------------------------------------------------------- operators

def _gray_pixels(img: Raster, what: str) -> np.ndarray:
    if img.channels != 1:
        raise RasterError(f"{what} needs a single-channel raster")
    return img.pixels


def scharr_x(img: Raster) -> GradientMap:
    """Horizontal Scharr response (correlation, positive for left-to-right brightening)."""
    g = _gray_pixels(img, "scharr_x").astype(np.int32)
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise RasterError("scharr_x needs at least a 3x3 image")
    p = np.pad(g, 1, mode="edge")
    right = 3 * p[:-2, 2:] + 10 * p[1:-1, 2:] + 3 * p[2:, 2:]
    left = 3 * p[:-2, :-2] + 10 * p[1:-1, :-2] + 3 * p[2:, :-2]
    return GradientMap(right - left)


class MorphOp(str, Enum):
    ERODE = "erode"
    DILATE = "dilate"
    OPEN = "open"
    CLOSE = "close"
    BLACKHAT = "blackhat"


def morph(img: Raster, kernel: tuple[int, int], op: MorphOp | str) -> Raster:
    """Grayscale morphology with a ``(width, height)`` rectangular kernel."""
    kw, kh = kernel
    if kw < 1 or kh < 1 or kw % 2 == 0 or kh % 2 == 0:
        raise RasterError(f"kernel dimensions must be odd and >= 1, got {kw}x{kh}")
    op = MorphOp(op)
    g = _gray_pixels(img, "morph")
    if op is MorphOp.ERODE:
        out = kernels.min_filter(g, kw, kh)
    elif op is MorphOp.DILATE:
        out = kernels.max_filter(g, kw, kh)
    elif op is MorphOp.OPEN:
        out = kernels.max_filter(kernels.min_filter(g, kw, kh), kw, kh)
    else:
        closed = kernels.min_filter(kernels.max_filter(g, kw, kh), kw, kh)
        if op is MorphOp.CLOSE:
            out = closed
        else:
            out = closed - g  # close >= img so no wrap-around
    return Raster(out)


def otsu_threshold(img: Raster) -> int:
    """Threshold ``t`` maximising between-class variance of ``<= t`` vs ``> t``."""
    g = _gray_pixels(img, "otsu_threshold")
    hist = np.bincount(g.ravel(), minlength=256).tolist()
    nonzero = [v for v in range(256) if hist[v]]
    if len(nonzero) == 1:
        return nonzero[0]
    total = sum(hist)
    s_total = sum(v * c for v, c in enumerate(hist))
    # between-class variance * total^2 == (s0*w1 - s1*w0)^2 / (w0*w1); compare exactly
    best_t, best_num, best_den = 0, -1, 1
    w0 = s0 = 0
    for t in range(255):
        w0 += hist[t]
        s0 += t * hist[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        num = (s0 * w1 - (s_total - s0) * w0) ** 2
        den = w0 * w1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def threshold(img: Raster, t: int) -> Raster:
    """Binary 0/255 raster of pixels strictly above ``t``."""
    g = _gray_pixels(img, "threshold")
    return Raster(np.where(g > t, 255, 0).astype(np.uint8))


def normalize_minmax(values: np.ndarray) -> Raster:
    """Rescale to 0..255 (floor), all zeros when the input is constant."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return Raster(np.zeros(v.shape, dtype=np.uint8))
    return Raster((255.0 * (v - lo) / (hi - lo)).astype(np.uint8))


def connected_components(binary: Raster, cls: RedactionClass = RedactionClass.TEXT) -> list[BBox]:
    """Tight box per 8-connected foreground (> 0) component, sorted by (y, x)."""
    g = _gray_pixels(binary, "connected_components")
    rows = kernels.label_boxes(g)
    return [
        BBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0), cls, 1.0, Source.PREDICTED)
        for x0, y0, x1, y1, _ in rows
    ]


def pixel_span(b: BBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Pixel index range ``[c0, c1) x [r0, r1)`` covered by ``b``, clipped."""
    c0 = max(0, math.floor(b.x))
    r0 = max(0, math.floor(b.y))
    c1 = min(width, math.ceil(b.x2))
    r1 = min(height, math.ceil(b.y2))
    return c0, r0, c1, r1


def draw_rect(img: Raster, b: BBox, color, mode: str = "fill") -> Raster:
    """Fill or outline (1 px) every pixel touched by ``b``; clipped to the image."""
    c0, r0, c1, r1 = pixel_span(b, img.width, img.height)
    if c1 <= c0 or r1 <= r0:
        return img
    px = img.pixels.copy()
    col = np.asarray(color, dtype=np.uint8)
    if img.channels == 3 and col.size == 1:
        col = np.repeat(col, 3)
    if img.channels == 1 and col.size != 1:
        raise RasterError("gray raster needs a scalar color")
    if mode == "fill":
        px[r0:r1, c0:c1] = col
    elif mode == "outline":
        # edges only where the true box border is inside the image
        top, bottom = math.floor(b.y), math.ceil(b.y2) - 1
        left, right = math.floor(b.x), math.ceil(b.x2) - 1
        if 0 <= top < img.height:
            px[top, c0:c1] = col
        if 0 <= bottom < img.height:
            px[bottom, c0:c1] = col
        if 0 <= left < img.width:
            px[r0:r1, left] = col
        if 0 <= right < img.width:
            px[r0:r1, right] = col
    else:
        raise ValueError(f"unknown draw mode {mode!r}")
    return Raster(px)

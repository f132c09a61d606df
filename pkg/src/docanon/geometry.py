"""Boxes, affine transforms and the IoU primitive.

Coordinates are continuous with a top-left origin and y pointing down.  Pixel
``(col, row)`` covers the unit square ``[col, col + 1) x [row, row + 1)``, so a
box ``(x, y, w, h)`` produced from a block of pixels spans exactly those pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTransformError

_DET_EPS = 1e-12


class RedactionClass(str, Enum):
    TEXT = "text"
    FACE = "face"
    SIGNATURE = "signature"
    MRZ = "mrz"
    BARCODE = "barcode"

    @classmethod
    def parse(cls, value: str) -> "RedactionClass":
        if isinstance(value, RedactionClass):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown redaction class {value!r}") from None


class Source(str, Enum):
    PREDICTED = "predicted"
    REFERENCE = "reference"  # reference box mapped into target coordinates
    ADJUSTED = "adjusted"

    @classmethod
    def parse(cls, value: str) -> "Source":
        if isinstance(value, Source):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown box source {value!r}") from None


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float
    cls: RedactionClass = RedactionClass.TEXT
    score: float = 1.0
    source: Source = Source.PREDICTED

    def __post_init__(self):
        for name in ("x", "y", "w", "h", "score"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if not isinstance(self.cls, RedactionClass):
            object.__setattr__(self, "cls", RedactionClass.parse(self.cls))
        if not isinstance(self.source, Source):
            object.__setattr__(self, "source", Source.parse(self.source))

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> np.ndarray:
        """The four corners as a (4, 2) array, clockwise from top-left."""
        return np.array(
            [[self.x, self.y], [self.x2, self.y], [self.x2, self.y2], [self.x, self.y2]],
            dtype=np.float64,
        )

    def with_geometry(self, x: float, y: float, w: float, h: float, **changes) -> "BBox":
        return replace(self, x=x, y=y, w=w, h=h, **changes)


@dataclass
class AnnotatedDocument:
    """A page and its boxes: ground truth, detections and outputs share this."""

    doc_id: str
    width: int
    height: int
    boxes: list[BBox] = field(default_factory=list)
    image: str | None = None

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError("document dimensions must be positive")

    def of_class(self, cls: RedactionClass) -> list[BBox]:
        return [b for b in self.boxes if b.cls is cls]


class AffineTransform:
    """A 2x3 matrix ``[[a, b, tx], [c, d, ty]]`` acting on column vectors."""

    __slots__ = ("_m",)

    def __init__(self, m):
        m = np.array(m, dtype=np.float64)
        if m.shape == (3, 3):
            m = m[:2]
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DegenerateTransformError("affine matrix has non-finite entries")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < _DET_EPS:
            raise DegenerateTransformError(f"affine linear part is singular (det={det:g})")
        m.setflags(write=False)
        self._m = m

    @property
    def m(self) -> np.ndarray:
        return self._m

    @property
    def det(self) -> float:
        m = self._m
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def homogeneous(self) -> np.ndarray:
        out = np.eye(3)
        out[:2] = self._m
        return out

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls([[1.0, 0.0, dx], [0.0, 1.0, dy]])

    @classmethod
    def similarity(
        cls,
        rotation_deg: float = 0.0,
        scale: float = 1.0,
        translation: tuple[float, float] = (0.0, 0.0),
        center: tuple[float, float] = (0.0, 0.0),
    ) -> "AffineTransform":
        """Rotate and scale about ``center``, then translate."""
        th = math.radians(rotation_deg)
        c, s = math.cos(th) * scale, math.sin(th) * scale
        cx, cy = center
        tx = cx - (c * cx - s * cy) + translation[0]
        ty = cy - (s * cx + c * cy) + translation[1]
        return cls([[c, -s, tx], [s, c, ty]])

    def inverse(self) -> "AffineTransform":
        return AffineTransform(np.linalg.inv(self.homogeneous()))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return pts @ self._m[:, :2].T + self._m[:, 2]

    def is_identity(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self._m - np.array([[1, 0, 0], [0, 1, 0]])) <= tol))

    def __repr__(self):
        rows = ", ".join("[" + ", ".join(f"{v:.6g}" for v in r) + "]" for r in self._m)
        return f"AffineTransform([{rows}])"


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (a.area + b.area - inter))  # rounding can overshoot for equal boxes


def iou_matrix(a: Sequence[BBox], b: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(a), len(b))."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    A = np.array([[r.x, r.y, r.x2, r.y2] for r in a])
    B = np.array([[r.x, r.y, r.x2, r.y2] for r in b])
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, np.minimum(inter / np.where(union > 0, union, 1.0), 1.0), 0.0)


def apply_transform(t: AffineTransform, b: BBox) -> BBox:
    """Map the corners of ``b`` through ``t`` and return their axis-aligned hull."""
    if t.is_identity():
        return replace(b, source=Source.REFERENCE)
    pts = t.apply(b.corners())
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    return b.with_geometry(float(x0), float(y0), float(x1 - x0), float(y1 - y0),
                           source=Source.REFERENCE)


def compose(t1: AffineTransform, t2: AffineTransform) -> AffineTransform:
    """Transform applying ``t2`` first, then ``t1``."""
    return AffineTransform(t1.homogeneous() @ t2.homogeneous())


def clip_box(b: BBox, width: float, height: float, min_fraction: float = 0.0) -> BBox | None:
    """Clip to ``[0, width] x [0, height]``.

    Returns None when nothing survives or when the surviving area is below
    ``min_fraction`` of the unclipped area.
    """
    x0, y0 = max(b.x, 0.0), max(b.y, 0.0)
    x1, y1 = min(b.x2, float(width)), min(b.y2, float(height))
    if x1 <= x0 or y1 <= y0:
        return None
    if (x1 - x0) * (y1 - y0) < min_fraction * b.area:
        return None
    if x0 == b.x and y0 == b.y and x1 == b.x2 and y1 == b.y2:
        return b
    return b.with_geometry(x0, y0, x1 - x0, y1 - y0)


def clip_boxes(boxes: Iterable[BBox], width: float, height: float,
               min_fraction: float = 0.0) -> list[BBox]:
    out = []
    for b in boxes:
        c = clip_box(b, width, height, min_fraction)
        if c is not None:
            out.append(c)
    return out

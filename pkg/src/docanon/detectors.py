"""Candidate redaction boxes: native MRZ and text-line detectors plus sidecar files.

Face, barcode and (optionally) text detections from external models arrive as
sidecar files in the annotation schema.  When a sidecar carries a class, its
boxes replace the native detector's output for that class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DetectorParams
from .formats import read_annotation, write_annotation
from .geometry import AnnotatedDocument, BBox, RedactionClass, Source, clip_boxes
from .raster import (MorphOp, Raster, connected_components, morph, normalize_minmax,
                     otsu_threshold, scharr_x, threshold)


@dataclass
class DetectionSet:
    doc_id: str
    boxes: list[BBox] = field(default_factory=list)

    def classes(self) -> set[RedactionClass]:
        return {b.cls for b in self.boxes}


def _odd(v: float) -> int:
    n = max(1, int(round(v)))
    return n if n % 2 else n + 1


def detect_mrz(img: Raster, params: DetectorParams | None = None) -> list[BBox]:
    """Machine-readable zone boxes from dark, dense, page-wide glyph bands."""
    params = params or DetectorParams()
    gray = img.to_gray()
    W, H = gray.width, gray.height
    rect = (_odd(W / params.mrz_rect_width_div), _odd(W / params.mrz_rect_height_div))
    square = _odd(W / params.mrz_square_div)

    blackhat = morph(gray, rect, MorphOp.BLACKHAT)
    grad = normalize_minmax(np.abs(scharr_x(blackhat).values))
    grad = morph(grad, rect, MorphOp.CLOSE)
    binary = threshold(grad, otsu_threshold(grad))
    binary = morph(binary, (square, square), MorphOp.CLOSE)
    binary = morph(binary, (9, 9), MorphOp.ERODE)  # four 3x3 erosions

    out = []
    for c in connected_components(binary, RedactionClass.MRZ):
        if c.w / c.h < 5 or c.w < 0.75 * W:
            continue
        px, py = 0.02 * c.w, 0.02 * c.h
        out.append(BBox(c.x - px, c.y - py, c.w + 2 * px, c.h + 2 * py, RedactionClass.MRZ))
    return clip_boxes(out, W, H)


def estimate_glyph_advance(binary: Raster, page_height: int) -> float:
    """Typical glyph pitch from the widths of glyph-shaped components."""
    comps = connected_components(binary)
    lo, hi = 0.005 * page_height, 0.1 * page_height
    widths = [c.w for c in comps if lo <= c.h <= hi and c.w <= 1.2 * c.h and c.w >= 2]
    if len(widths) < 5:
        return page_height / 36.0
    return 1.4 * float(np.median(widths))


def detect_text_lines(img: Raster, params: DetectorParams | None = None) -> list[BBox]:
    """One box per run of dark glyph-sized marks on a bright background."""
    params = params or DetectorParams()
    gray = img.to_gray()
    W, H = gray.width, gray.height
    # 1-px wide kernel: vertical microprint stripes survive the closing and vanish
    blackhat = morph(gray, (1, _odd(params.text_blackhat_height * H)), MorphOp.BLACKHAT)
    binary = threshold(blackhat, otsu_threshold(blackhat))
    advance = estimate_glyph_advance(binary, H)
    binary = morph(binary, (_odd(params.text_close_factor * advance), 1), MorphOp.CLOSE)
    out = []
    for c in connected_components(binary, RedactionClass.TEXT):
        if c.w / c.h >= 1.2 and 0.005 * H <= c.h <= 0.1 * H:
            out.append(c)
    return out


def load_sidecar(path) -> DetectionSet:
    doc = read_annotation(path)
    boxes = [b.with_geometry(b.x, b.y, b.w, b.h, source=Source.PREDICTED) for b in doc.boxes]
    return DetectionSet(doc.doc_id, boxes)


def write_sidecar(detections: DetectionSet, path, width: int, height: int) -> None:
    write_annotation(AnnotatedDocument(detections.doc_id, width, height, list(detections.boxes)), path)


def detect_all(img: Raster, sidecar: DetectionSet | None = None, doc_id: str = "document",
               params: DetectorParams | None = None) -> DetectionSet:
    sidecar_boxes = list(sidecar.boxes) if sidecar is not None else []
    if sidecar is not None:
        doc_id = sidecar.doc_id
    provided = {b.cls for b in sidecar_boxes}
    boxes = []
    if RedactionClass.MRZ not in provided:
        boxes.extend(detect_mrz(img, params))
    if RedactionClass.TEXT not in provided:
        boxes.extend(detect_text_lines(img, params))
    boxes.extend(b.with_geometry(b.x, b.y, b.w, b.h, source=Source.PREDICTED) for b in sidecar_boxes)
    boxes = clip_boxes(boxes, img.width, img.height)
    return DetectionSet(doc_id, boxes)

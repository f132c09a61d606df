"""Fusing reference redactions with detections, the two baselines, and rendering.

Reference boxes are mapped into the target page by the keypoint alignment and
then merged with the detections class by class:

* text, MRZ and barcode: each reference box takes the predicted box it overlaps
  most (IoU above the policy gate, one prediction per reference).  The fused
  box keeps the reference's left edge, top and height and ends where the
  prediction ends, i.e. ``w = w_pred - (x_ref - x_pred)``.  References without
  such a prediction pass through unchanged.
* faces: every prediction is kept, and reference faces that overlap none of
  them are added.
* signatures: reference boxes are the redactions.
"""

from __future__ import annotations

from dataclasses import replace

from .config import PipelineConfig, RedactionPolicy
from .detectors import DetectionSet
from .errors import AlignmentError
from .features import align_detailed
from .geometry import (AffineTransform, AnnotatedDocument, BBox, RedactionClass, Source,
                       apply_transform, clip_box, clip_boxes, iou_matrix)
from .raster import Raster, draw_rect

CLASS_COLORS = {
    RedactionClass.FACE: (255, 255, 0),
    RedactionClass.TEXT: (0, 255, 0),
    RedactionClass.SIGNATURE: (0, 0, 255),
    RedactionClass.MRZ: (0, 0, 0),
    RedactionClass.BARCODE: (255, 0, 0),
}


def transform_reference(ref: AnnotatedDocument, t: AffineTransform, width: int, height: int,
                        min_fraction: float = 0.25) -> list[BBox]:
    """Reference boxes in target coordinates, clipped; mostly off-page boxes are dropped."""
    out = []
    for b in ref.boxes:
        moved = apply_transform(t, b)
        moved = clip_box(moved, width, height, min_fraction)
        if moved is not None:
            out.append(replace(moved, source=Source.REFERENCE))
    return out


def _check_class(boxes, allowed, what):
    for b in boxes:
        if b.cls not in allowed:
            raise ValueError(f"{what} got a {b.cls.value} box")


def _fuse_by_width(ref_boxes, pred_boxes, policy: RedactionPolicy) -> list[BBox]:
    ref_boxes, pred_boxes = list(ref_boxes), list(pred_boxes)
    out: list[BBox] = [replace(r, source=Source.REFERENCE, score=1.0) for r in ref_boxes]
    if not ref_boxes or not pred_boxes:
        return out
    ious = iou_matrix(ref_boxes, pred_boxes)
    # greedy one-to-one assignment in descending IoU; index order breaks ties
    cand = sorted(
        ((ious[i, j], i, j) for i in range(len(ref_boxes)) for j in range(len(pred_boxes))
         if ious[i, j] > policy.iou_gate),
        key=lambda c: (-c[0], c[1], c[2]),
    )
    used_ref, used_pred = set(), set()
    for _, i, j in cand:
        if i in used_ref or j in used_pred:
            continue
        used_ref.add(i)
        used_pred.add(j)
        r, p = ref_boxes[i], pred_boxes[j]
        w = p.w - (r.x - p.x)
        if w <= 0:
            continue  # the prediction ends left of the reference; keep the reference box
        out[i] = BBox(r.x, r.y, w, r.h, r.cls, p.score, Source.ADJUSTED)
    return out


def fuse_text(ref_boxes, pred_boxes, policy: RedactionPolicy | None = None) -> list[BBox]:
    """One output box per reference text box; unmatched predictions are discarded."""
    ref_boxes, pred_boxes = list(ref_boxes), list(pred_boxes)
    _check_class(ref_boxes + pred_boxes, {RedactionClass.TEXT}, "fuse_text")
    return _fuse_by_width(ref_boxes, pred_boxes, policy or RedactionPolicy())


def fuse_matched(ref_boxes, pred_boxes, policy: RedactionPolicy | None = None) -> list[BBox]:
    """The text scheme applied to a single MRZ or barcode class."""
    ref_boxes, pred_boxes = list(ref_boxes), list(pred_boxes)
    classes = {b.cls for b in ref_boxes + pred_boxes}
    if len(classes) > 1:
        raise ValueError(f"fuse_matched needs a single class, got {sorted(c.value for c in classes)}")
    _check_class(ref_boxes + pred_boxes, {RedactionClass.MRZ, RedactionClass.BARCODE}, "fuse_matched")
    return _fuse_by_width(ref_boxes, pred_boxes, policy or RedactionPolicy())


def fuse_face(ref_boxes, pred_boxes, policy: RedactionPolicy | None = None) -> list[BBox]:
    policy = policy or RedactionPolicy()
    ref_boxes, pred_boxes = list(ref_boxes), list(pred_boxes)
    out = list(pred_boxes)
    ious = iou_matrix(ref_boxes, pred_boxes)
    for i, r in enumerate(ref_boxes):
        if not pred_boxes or ious[i].max() <= policy.face_overlap_epsilon:
            out.append(replace(r, source=Source.REFERENCE, score=1.0))
    return out


def fuse_signature(ref_boxes) -> list[BBox]:
    return [replace(b, source=Source.REFERENCE, score=1.0) for b in ref_boxes]


def fuse(ref_boxes, pred_boxes, policy: RedactionPolicy | None = None) -> list[BBox]:
    """Dispatch transformed reference boxes and predictions per class."""
    policy = policy or RedactionPolicy()
    out = []
    for cls in RedactionClass:
        refs = [b for b in ref_boxes if b.cls is cls]
        preds = [b for b in pred_boxes if b.cls is cls]
        if cls is RedactionClass.TEXT:
            out.extend(fuse_text(refs, preds, policy))
        elif cls is RedactionClass.FACE:
            out.extend(fuse_face(refs, preds, policy))
        elif cls is RedactionClass.SIGNATURE:
            out.extend(fuse_signature(refs))
        else:
            out.extend(fuse_matched(refs, preds, policy))
    return out


def redact_aligned(t: AffineTransform, width: int, height: int, reference: AnnotatedDocument,
                   detections: DetectionSet, config: PipelineConfig | None = None,
                   doc_id: str | None = None) -> AnnotatedDocument:
    """Fusion given an already estimated reference-to-target transform."""
    config = config or PipelineConfig()
    refs = transform_reference(reference, t, width, height, config.clip_min_fraction)
    boxes = clip_boxes(fuse(refs, detections.boxes, config.policy), width, height)
    return AnnotatedDocument(doc_id or detections.doc_id, width, height, boxes)


def redact(target: Raster, reference: AnnotatedDocument, reference_image: Raster,
           detections: DetectionSet, config: PipelineConfig | None = None,
           doc_id: str | None = None) -> AnnotatedDocument:
    """Align the reference to the target and fuse; raises AlignmentError on failure."""
    config = config or PipelineConfig()
    alignment = align_detailed(reference_image, target, config.features, config.ransac)
    return redact_aligned(alignment.transform, target.width, target.height, reference,
                          detections, config, doc_id)


def baseline_auto(detections: DetectionSet, width: int, height: int) -> AnnotatedDocument:
    """Detections taken as the final redactions."""
    return AnnotatedDocument(detections.doc_id, width, height, list(detections.boxes))


def baseline_copy(reference: AnnotatedDocument, width: int, height: int, doc_id: str | None = None,
                  min_fraction: float = 0.25) -> AnnotatedDocument:
    """Reference boxes copied untransformed, clipped to the target page."""
    boxes = [replace(b, source=Source.REFERENCE, score=1.0)
             for b in clip_boxes(reference.boxes, width, height, min_fraction)]
    return AnnotatedDocument(doc_id or reference.doc_id, width, height, boxes)


def redact_with_fallback(target: Raster, reference: AnnotatedDocument, reference_image: Raster,
                         detections: DetectionSet, config: PipelineConfig | None = None,
                         doc_id: str | None = None) -> tuple[AnnotatedDocument, str | None]:
    """Proposed method, degrading to copy-reference when alignment fails.

    Returns the document and the alignment error message (None on success).
    """
    try:
        return redact(target, reference, reference_image, detections, config, doc_id), None
    except AlignmentError as exc:
        config = config or PipelineConfig()
        doc = baseline_copy(reference, target.width, target.height, doc_id or detections.doc_id,
                            config.clip_min_fraction)
        return doc, str(exc)


def render(img: Raster, boxes, mode: str = "overlay") -> Raster:
    """Black out every box, or outline each in its class colour."""
    if mode not in ("blackout", "overlay"):
        raise ValueError(f"unknown render mode {mode!r}")
    out = img.to_rgb()
    for b in boxes:
        if mode == "blackout":
            out = draw_rect(out, b, (0, 0, 0), "fill")
        else:
            out = draw_rect(out, b, CLASS_COLORS[b.cls], "outline")
    return out

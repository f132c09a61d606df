import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import box_strategy
from docanon.config import RedactionPolicy
from docanon.detectors import DetectionSet
from docanon.geometry import AffineTransform, AnnotatedDocument, BBox, RedactionClass as C, Source, iou
from docanon.raster import Raster
from docanon.redactor import (CLASS_COLORS, baseline_auto, baseline_copy, fuse, fuse_face, fuse_matched,
                              fuse_signature, fuse_text, redact, redact_aligned, redact_with_fallback,
                              render, transform_reference)


def T(x, y, w, h, score=1.0):
    return BBox(x, y, w, h, C.TEXT, score)


def test_width_adjustment_example():
    (out,) = fuse_text([T(100, 10, 80, 20)], [T(96, 10, 120, 20, 0.7)])
    assert (out.x, out.y, out.w, out.h) == (100, 10, 116, 20)
    assert out.source is Source.ADJUSTED and out.score == 0.7


def test_same_left_edge_takes_predicted_width():
    (out,) = fuse_text([T(50, 5, 40, 12)], [T(50, 6, 73, 10)])
    assert (out.x, out.y, out.w, out.h) == (50, 5, 73, 12)


def test_below_gate_passes_reference_through():
    ref = T(0, 0, 10, 10)
    for pred in (T(0, 0, 10, 200), T(0, 0, 10, 100)):  # IoU 0.05 and exactly 0.1
        (out,) = fuse_text([ref], [pred])
        assert (out.x, out.y, out.w, out.h) == (0, 0, 10, 10)
        assert out.source is Source.REFERENCE and out.score == 1.0
    assert iou(ref, T(0, 0, 10, 100)) == 0.1


def test_greedy_one_to_one():
    refs = [T(0, 0, 50, 10), T(5, 0, 50, 10)]
    pred = T(4, 0, 60, 10, 0.9)
    out = fuse_text(refs, [pred])
    assert iou(refs[1], pred) > iou(refs[0], pred)
    assert out[0].source is Source.REFERENCE and out[0].w == 50
    assert out[1].source is Source.ADJUSTED and out[1].x2 == pytest.approx(pred.x2)


def test_unmatched_predictions_are_discarded():
    out = fuse_text([T(0, 0, 20, 10)], [T(2, 0, 20, 10), T(300, 300, 20, 10)])
    assert len(out) == 1


def test_class_checks():
    with pytest.raises(ValueError):
        fuse_text([BBox(0, 0, 5, 5, C.MRZ)], [])
    with pytest.raises(ValueError):
        fuse_matched([BBox(0, 0, 5, 5, C.MRZ)], [BBox(0, 0, 5, 5, C.BARCODE)])
    with pytest.raises(ValueError):
        fuse_matched([T(0, 0, 5, 5)], [])
    (out,) = fuse_matched([BBox(0, 0, 100, 20, C.MRZ)], [BBox(-4, 1, 110, 18, C.MRZ, 0.8)])
    assert (out.x, out.w, out.h) == (0, 106, 20)


@given(st.lists(box_strategy(), max_size=6), st.lists(box_strategy(), max_size=6))
def test_text_fusion_invariants(refs, preds):
    preds = [BBox(p.x, p.y, p.w, p.h, C.TEXT, (k + 1) / 10) for k, p in enumerate(preds)]
    out = fuse_text(refs, preds)
    assert len(out) == len(refs)
    used = [o.score for o in out if o.source is Source.ADJUSTED]
    assert len(used) == len(set(used))
    by_score = {p.score: p for p in preds}
    for r, o in zip(refs, out):
        assert (o.x, o.y, o.h) == (r.x, r.y, r.h) and o.w > 0
        if o.source is Source.ADJUSTED:
            p = by_score[o.score]
            assert iou(r, p) > 0.1
            assert o.x2 == pytest.approx(p.x2)
        else:
            assert o.w == r.w


def test_face_rules():
    pred = BBox(10, 10, 30, 40, C.FACE, 0.6)
    overlapping = BBox(20, 20, 30, 40, C.FACE)
    separate = BBox(100, 10, 30, 40, C.FACE)
    touching = BBox(40, 10, 30, 40, C.FACE)  # shares an edge, IoU 0
    out = fuse_face([overlapping, separate, touching], [pred])
    assert out[0] == pred
    assert [(b.x, b.source) for b in out[1:]] == [(100, Source.REFERENCE), (40, Source.REFERENCE)]
    assert fuse_face([], [pred]) == [pred]
    assert len(fuse_face([separate], [])) == 1
    strict = fuse_face([overlapping], [pred], RedactionPolicy(face_overlap_epsilon=0.5))
    assert len(strict) == 2


def test_signature_pass_through():
    sig = BBox(3, 4, 50, 20, C.SIGNATURE, 0.5, Source.PREDICTED)
    (out,) = fuse_signature([sig])
    assert (out.x, out.y, out.w, out.h, out.score, out.source) == (3, 4, 50, 20, 1.0, Source.REFERENCE)
    outs = fuse([sig], [BBox(0, 0, 60, 30, C.SIGNATURE)])
    assert [(b.x, b.w) for b in outs] == [(3, 50)]


def test_fuse_dispatch_counts():
    refs = [T(0, 0, 40, 10), BBox(0, 50, 100, 20, C.MRZ), BBox(0, 100, 30, 30, C.SIGNATURE),
            BBox(100, 100, 30, 40, C.FACE), BBox(200, 0, 60, 20, C.BARCODE)]
    preds = [T(1, 0, 50, 10), BBox(100, 100, 30, 40, C.FACE, 0.9), T(500, 500, 10, 10)]
    out = fuse(refs, preds)
    counts = {c: sum(b.cls is c for b in out) for c in C}
    assert counts == {C.TEXT: 1, C.MRZ: 1, C.SIGNATURE: 1, C.FACE: 1, C.BARCODE: 1}


def _ref_doc():
    return AnnotatedDocument("ref", 200, 100, [T(10, 10, 50, 10), BBox(180, 70, 40, 40, C.FACE),
                                               BBox(195, 10, 40, 10, C.MRZ)])


def test_transform_reference():
    ref = _ref_doc()
    ident = transform_reference(ref, AffineTransform.identity(), 200, 100)
    assert [(b.x, b.y, b.w, b.h) for b in ident] == [(10, 10, 50, 10), (180, 70, 20, 30)]
    assert all(b.source is Source.REFERENCE for b in ident)
    moved = transform_reference(ref, AffineTransform.translation(10, 0), 200, 100)
    assert (moved[0].x, moved[0].y) == (20, 10)
    assert len(moved) == 1  # the face keeps under a quarter of its area


def test_redact_aligned_without_detections_is_transform_reference():
    ref = _ref_doc()
    t = AffineTransform.similarity(2.0, 1.01, (3, -2), (100, 50))
    doc = redact_aligned(t, 200, 100, ref, DetectionSet("tgt"))
    expect = transform_reference(ref, t, 200, 100)
    assert doc.doc_id == "tgt"
    assert [(b.cls, b.x, b.y, b.w, b.h) for b in doc.boxes] == [(b.cls, b.x, b.y, b.w, b.h) for b in expect]


def test_redact_self_alignment(small_corpus):
    ref_id = small_corpus.references()[0].doc_id
    img, ann = small_corpus.image(ref_id), small_corpus.annotation(ref_id)
    doc = redact(img, ann, img, DetectionSet(ref_id))
    for cls in C:
        got, want = doc.of_class(cls), ann.of_class(cls)
        assert len(got) == len(want)
        for a, b in zip(got, want):
            assert iou(a, b) > 0.98


def test_fallback_on_blank_target(small_corpus):
    ref_id = small_corpus.references()[0].doc_id
    img, ann = small_corpus.image(ref_id), small_corpus.annotation(ref_id)
    blank = Raster.blank(img.width, img.height, 240)
    doc, err = redact_with_fallback(blank, ann, img, DetectionSet("x"))
    assert err and doc.doc_id == "x"
    assert [(b.x, b.y, b.w, b.h) for b in doc.boxes] == [(b.x, b.y, b.w, b.h) for b in ann.boxes]


def test_baselines():
    dets = DetectionSet("d", [T(1, 2, 3, 4, 0.5)])
    out = baseline_auto(dets, 50, 50)
    assert out.boxes == dets.boxes and (out.width, out.height) == (50, 50)
    copy = baseline_copy(_ref_doc(), 200, 100, "tgt")
    assert copy.doc_id == "tgt"
    assert [(b.x, b.w, b.h) for b in copy.boxes] == [(10, 50, 10), (180, 20, 30)]
    assert all(b.score == 1.0 and b.source is Source.REFERENCE for b in copy.boxes)


def test_render_modes():
    img = Raster(np.full((20, 30), 200, np.uint8))
    black = render(img, [T(0, 0, 30, 20)], "blackout")
    assert black.channels == 3 and not black.pixels.any()
    plain = render(img, [], "overlay")
    np.testing.assert_array_equal(plain.pixels, img.to_rgb().pixels)
    face = render(img, [BBox(5, 5, 10, 8, C.FACE)], "overlay").pixels
    yellow = CLASS_COLORS[C.FACE]
    assert tuple(face[5, 5]) == yellow and tuple(face[12, 14]) == yellow
    assert tuple(face[8, 9]) == (200, 200, 200)
    with pytest.raises(ValueError):
        render(img, [], "blur")

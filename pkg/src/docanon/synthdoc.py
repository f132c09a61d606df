"""Deterministic synthetic ID-card-like documents with ground truth.

A template fixes the layout of one document model: a header band, static
label text, light background shapes, microprint stripe patches and the
regions holding personal data.  Rendering a template with a seed fills those
regions with per-document content; text is drawn as pseudo-glyphs whose
count varies with the seed, so names differ in length between documents of
the same model.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formats import ManifestEntry, write_annotation, write_manifest
from .geometry import (AffineTransform, AnnotatedDocument, BBox, RedactionClass, Source,
                       apply_transform, clip_box)
from .raster import Raster, write_image

GLYPH_GAP = 3
TEXT_INK = 40
LABEL_INK = 70
BACKGROUND = 255


@dataclass(frozen=True)
class FieldSpec:
    """A region holding personal data.

    For text fields ``region`` is the widest possible run (``length[1]``
    glyphs); the rendered run starts at the region's top-left corner.
    """

    cls: RedactionClass
    region: BBox
    length: tuple[int, int] = (0, 0)
    advance: int = 11


@dataclass(frozen=True)
class StaticText:
    x: int
    y: int
    count: int
    advance: int = 8
    height: int = 9
    ink: int = LABEL_INK
    gap: int = 2


@dataclass(frozen=True)
class Decoration:
    kind: str  # "rect", "ellipse", "stripes" or "emblem"
    region: BBox
    value: int
    period: int = 3


@dataclass(frozen=True)
class DocumentTemplate:
    model_id: str
    width: int
    height: int
    fields: tuple[FieldSpec, ...] = ()
    texts: tuple[StaticText, ...] = ()
    decorations: tuple[Decoration, ...] = ()
    seed: int = 0

    def __post_init__(self):
        for f in self.fields:
            r = f.region
            if r.x < 0 or r.y < 0 or r.x2 > self.width or r.y2 > self.height:
                raise ValueError(f"{self.model_id}: field {f.cls.value} region outside page")
            if f.cls is RedactionClass.TEXT and not 1 <= f.length[0] <= f.length[1]:
                raise ValueError(f"{self.model_id}: text field needs a length range >= 1")


@dataclass(frozen=True)
class PerturbationParams:
    rotation: float = 0.0
    scale: float = 1.0
    translation: tuple[float, float] = (0.0, 0.0)
    noise: int = 0
    seed: int = 0

    MAX_ROTATION = 20.0
    SCALE_RANGE = (0.8, 1.25)

    def validate(self) -> None:
        if abs(self.rotation) > self.MAX_ROTATION:
            raise ValueError(f"rotation {self.rotation} outside +-{self.MAX_ROTATION} degrees")
        lo, hi = self.SCALE_RANGE
        if not lo <= self.scale <= hi:
            raise ValueError(f"scale {self.scale} outside [{lo}, {hi}]")
        if not 0 <= self.noise <= 255:
            raise ValueError(f"noise amplitude {self.noise} outside [0, 255]")


@dataclass(frozen=True)
class PerturbationEnvelope:
    """Ranges from which make_corpus draws per-document perturbations."""

    max_rotation: float = 3.0
    scale_range: tuple[float, float] = (0.96, 1.04)
    max_translation: float = 12.0
    noise: int = 4

    def sample(self, rng: np.random.Generator) -> PerturbationParams:
        return PerturbationParams(
            rotation=float(rng.uniform(-self.max_rotation, self.max_rotation)),
            scale=float(rng.uniform(*self.scale_range)),
            translation=(float(rng.uniform(-self.max_translation, self.max_translation)),
                         float(rng.uniform(-self.max_translation, self.max_translation))),
            noise=int(self.noise),
            seed=int(rng.integers(0, 2**63)),
        )


# ---------------------------------------------------------------- drawing

def _glyph(rng, w: int, h: int, closing: bool) -> np.ndarray:
    """Boolean pseudo-glyph bitmap; ``closing`` forces ink in the last column."""
    g = np.zeros((h, w), dtype=bool)
    sw = 2 if w >= 6 else 1
    bar = max(2, h // 6)
    g[:, :sw] = True
    parts = rng.random(4) < (0.5, 0.5, 0.5, 0.6)
    if not parts[:3].any():
        parts[rng.integers(0, 3)] = True
    if parts[0]:
        g[:bar, :] = True
    if parts[1]:
        mid = h // 2 - bar // 2
        g[mid : mid + bar, : w - 1] = True
    if parts[2]:
        g[h - bar :, :] = True
    if parts[3] or closing:
        g[:, w - sw :] = True
    return g


def _draw_run(px, x, y, count, advance, height, gap, ink, rng, fill_last=True):
    """Draw ``count`` glyphs; with ``fill_last`` the run spans count * advance."""
    for j in range(count):
        last = j == count - 1
        gw = advance if (last and fill_last) else advance - gap
        g = _glyph(rng, gw, height, closing=last)
        region = px[y : y + height, x + j * advance : x + j * advance + gw]
        region[g[: region.shape[0], : region.shape[1]]] = ink


def _fill_ellipse(px, cx, cy, rx, ry, value):
    h, w = px.shape
    y0, y1 = max(0, int(cy - ry)), min(h, int(math.ceil(cy + ry)) + 1)
    x0, x1 = max(0, int(cx - rx)), min(w, int(math.ceil(cx + rx)) + 1)
    if y1 <= y0 or x1 <= x0:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    inside = ((xx + 0.5 - cx) / rx) ** 2 + ((yy + 0.5 - cy) / ry) ** 2 <= 1.0
    px[y0:y1, x0:x1][inside] = value


def _span(b: BBox) -> tuple[int, int, int, int]:
    return int(b.x), int(b.y), int(b.x + b.w), int(b.y + b.h)


def _draw_emblem(px, region: BBox, value: int, rng):
    """Ring around a grid of random blocks: static, corner-rich print."""
    x0, y0, x1, y1 = _span(region)
    cx, cy, r = (x0 + x1) / 2, (y0 + y1) / 2, min(x1 - x0, y1 - y0) / 2
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(xx + 0.5 - cx, yy + 0.5 - cy)
    sub = px[y0:y1, x0:x1]
    sub[(d <= r) & (d > r - 3)] = value
    n, cell = 4, int(r * 1.2) // 4
    gx, gy = int(cx - n * cell / 2), int(cy - n * cell / 2)
    for i in range(n):
        for j in range(n):
            if rng.random() < 0.55:
                px[gy + i * cell : gy + (i + 1) * cell, gx + j * cell : gx + (j + 1) * cell] = value


def _draw_decoration(px, d: Decoration, rng):
    x0, y0, x1, y1 = _span(d.region)
    if d.kind == "rect":
        px[y0:y1, x0:x1] = np.minimum(px[y0:y1, x0:x1], d.value)
    elif d.kind == "ellipse":
        _fill_ellipse(px, (x0 + x1) / 2, (y0 + y1) / 2, (x1 - x0) / 2, (y1 - y0) / 2, d.value)
    elif d.kind == "stripes":
        px[y0:y1, x0:x1:d.period] = np.minimum(px[y0:y1, x0:x1:d.period], d.value)
    elif d.kind == "emblem":
        _draw_emblem(px, d.region, d.value, rng)
    else:
        raise ValueError(f"unknown decoration kind {d.kind!r}")


def _draw_face(px, region: BBox, rng):
    x0, y0, x1, y1 = _span(region)
    w, h = x1 - x0, y1 - y0
    px[y0:y1, x0:x1] = 190
    sub = px[y0:y1, x0:x1]
    cx = w / 2 + rng.uniform(-0.05, 0.05) * w
    cy = h * rng.uniform(0.38, 0.44)
    _fill_ellipse(sub, cx, h * 1.02, w * rng.uniform(0.42, 0.5), h * rng.uniform(0.3, 0.36), 120)
    _fill_ellipse(sub, cx, cy, w * rng.uniform(0.22, 0.28), h * rng.uniform(0.24, 0.3), 150)
    eye_y, eye_dx = cy - h * 0.04, w * rng.uniform(0.08, 0.11)
    for sx in (-1, 1):
        _fill_ellipse(sub, cx + sx * eye_dx, eye_y, w * 0.035, h * 0.018, 70)
    _fill_ellipse(sub, cx, cy + h * 0.13, w * 0.08, h * 0.02, 95)


def _draw_barcode(px, region: BBox, rng):
    x0, y0, x1, y1 = _span(region)
    col = x0
    dark = True
    while col < x1:
        width = int(rng.integers(1, 5)) if dark else int(rng.integers(1, 4))
        if dark:
            px[y0:y1, col : min(x1, col + width)] = 20
        col += width
        dark = not dark
    px[y0:y1, x1 - 2 : x1] = 20


def _draw_signature(px, region: BBox, rng):
    x0, y0, x1, y1 = _span(region)
    n = int(rng.integers(5, 9))
    xs = np.linspace(x0 + 2, x1 - 3, n)
    ys = rng.uniform(y0 + 3, y1 - 4, n)
    for (ax, ay), (bx, by) in zip(zip(xs[:-1], ys[:-1]), zip(xs[1:], ys[1:])):
        steps = int(max(abs(bx - ax), abs(by - ay)) * 2) + 1
        for t in np.linspace(0.0, 1.0, steps):
            cx, cy = int(ax + (bx - ax) * t), int(ay + (by - ay) * t)
            px[cy : cy + 2, cx : cx + 2] = 35


def render(template: DocumentTemplate, seed: int, doc_id: str | None = None
           ) -> tuple[Raster, AnnotatedDocument]:
    """Render one document of ``template``; deterministic in ``(template, seed)``."""
    doc_id = doc_id or f"{template.model_id}-s{seed}"
    px = np.full((template.height, template.width), BACKGROUND, dtype=np.uint8)
    static = np.random.default_rng([template.seed, 0x5747])
    person = np.random.default_rng([template.seed, 0x9e37, seed])

    for d in template.decorations:
        _draw_decoration(px, d, static)
    for t in template.texts:
        _draw_run(px, t.x, t.y, t.count, t.advance, t.height, t.gap, t.ink, static)

    boxes = []
    for f in template.fields:
        r = f.region
        if f.cls is RedactionClass.TEXT:
            k = int(person.integers(f.length[0], f.length[1] + 1))
            _draw_run(px, int(r.x), int(r.y), k, f.advance, int(r.h), GLYPH_GAP, TEXT_INK, person)
            boxes.append(BBox(r.x, r.y, float(k * f.advance), r.h, f.cls, 1.0, Source.REFERENCE))
            continue
        if f.cls is RedactionClass.FACE:
            _draw_face(px, r, person)
        elif f.cls is RedactionClass.MRZ:
            adv = f.advance
            rows = 2
            gh = int((r.h - 10) // rows)
            cells = int(r.w // adv)
            for row in range(rows):
                _draw_run(px, int(r.x), int(r.y) + row * (gh + 10), cells, adv, gh, 4, 25, person)
        elif f.cls is RedactionClass.BARCODE:
            _draw_barcode(px, r, person)
        elif f.cls is RedactionClass.SIGNATURE:
            _draw_signature(px, r, person)
        boxes.append(BBox(r.x, r.y, r.w, r.h, f.cls, 1.0, Source.REFERENCE))

    ann = AnnotatedDocument(doc_id, template.width, template.height, boxes)
    return Raster(px), ann


# ---------------------------------------------------------------- perturbation

def perturbation_transform(width: int, height: int, p: PerturbationParams) -> AffineTransform:
    """Rotation and scale about the page centre followed by translation."""
    if p.rotation == 0 and p.scale == 1 and p.translation == (0, 0):
        return AffineTransform.identity()
    return AffineTransform.similarity(p.rotation, p.scale, p.translation, (width / 2, height / 2))


def warp(img: Raster, t: AffineTransform, fill: int = BACKGROUND) -> Raster:
    """Resample ``img`` through ``t`` (nearest neighbour, inverse mapping)."""
    if t.is_identity():
        return img
    h, w = img.height, img.width
    inv = t.inverse().m
    vv, uu = np.mgrid[0:h, 0:w]
    qx, qy = uu + 0.5, vv + 0.5
    sx = np.floor(inv[0, 0] * qx + inv[0, 1] * qy + inv[0, 2]).astype(np.int64)
    sy = np.floor(inv[1, 0] * qx + inv[1, 1] * qy + inv[1, 2]).astype(np.int64)
    ok = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    src = img.pixels
    out = np.full(src.shape, fill, dtype=np.uint8)
    out[ok] = src[sy[ok], sx[ok]]
    return Raster(out)


def perturb(img: Raster, ann: AnnotatedDocument, p: PerturbationParams
            ) -> tuple[Raster, AnnotatedDocument, AffineTransform]:
    """Warp a page and its ground truth; returns the exact applied transform."""
    p.validate()
    t = perturbation_transform(img.width, img.height, p)
    out = warp(img, t)
    if p.noise:
        rng = np.random.default_rng(p.seed)
        noise = rng.integers(-p.noise, p.noise + 1, size=out.pixels.shape, dtype=np.int16)
        out = Raster(np.clip(out.pixels.astype(np.int16) + noise, 0, 255).astype(np.uint8))
    boxes = []
    for b in ann.boxes:
        moved = apply_transform(t, b) if not t.is_identity() else b
        moved = clip_box(moved, img.width, img.height)
        if moved is not None:
            boxes.append(moved.with_geometry(moved.x, moved.y, moved.w, moved.h, source=b.source))
    return out, AnnotatedDocument(ann.doc_id, ann.width, ann.height, boxes, ann.image), t


# ---------------------------------------------------------------- templates

def make_template(index: int, seed: int = 0, *, mrz: bool | None = None,
                  barcode: bool | None = None, signature: bool | None = None,
                  stripes: bool = True) -> DocumentTemplate:
    """Build the layout of document model ``index``.

    Feature flags default to a fixed rotation over ``index`` so that any three
    consecutive templates differ in which regions they carry.
    """
    rng = np.random.default_rng([seed, index, 0x7E4])
    mrz = (index % 3 != 1) if mrz is None else mrz
    barcode = (index % 3 != 0) if barcode is None else barcode
    signature = (index % 2 == 0) if signature is None else signature
    face_left = index % 2 == 0

    W = int(rng.integers(600, 681))
    H = int(rng.integers(390, 431))
    m = 20
    header_h = int(rng.integers(34, 45))
    decorations = [Decoration("rect", BBox(0, 0, W, header_h), int(rng.integers(200, 226)))]
    texts = [StaticText(int(m + rng.integers(0, 60)), 10 + int(rng.integers(0, header_h - 24)),
                        int(rng.integers(8, 15)), 10, 12, 60)]
    side = header_h - 6
    ex = int(rng.integers(W // 2, W - m - side))
    decorations.append(Decoration("emblem", BBox(ex, 3, side, side), int(rng.integers(50, 90))))
    code_x = texts[0].x + texts[0].count * 10 + 16
    if code_x + 5 * 8 < ex - 8:
        texts.append(StaticText(code_x, header_h - 14, int(min(12, (ex - 8 - code_x) // 8)), 8, 8, 90))
    fields: list[FieldSpec] = []

    for _ in range(int(rng.integers(2, 5))):
        sw, sh = int(rng.uniform(0.15, 0.35) * W), int(rng.uniform(0.15, 0.35) * H)
        sx, sy = int(rng.integers(0, W - sw)), int(rng.integers(header_h, H - sh))
        kind = "rect" if rng.random() < 0.5 else "ellipse"
        decorations.append(Decoration(kind, BBox(sx, sy, sw, sh), int(rng.integers(230, 246))))

    bottom = H - 20
    if mrz:
        adv = 13
        cells = (W - 48) // adv
        mw, mh = cells * adv, 46
        mx, my = (W - mw) // 2, H - 18 - mh
        fields.append(FieldSpec(RedactionClass.MRZ, BBox(mx, my, mw, mh), (0, 0), adv))
        bottom = my - 34

    fw, fh = int(0.27 * W), int(rng.uniform(0.44, 0.5) * H)
    fx = m if face_left else W - m - fw
    fy = header_h + 20
    face = BBox(fx, fy, fw, fh, RedactionClass.FACE)
    fields.append(FieldSpec(RedactionClass.FACE, face))
    if barcode:
        bh = int(rng.integers(30, 41))
        by = fy + fh + 14
        if by + bh <= bottom:
            fields.append(FieldSpec(RedactionClass.BARCODE, BBox(fx + 6, by, fw - 12, bh)))
        else:
            barcode = False

    col_x = fx + fw + 30 if face_left else m + 6
    col_end = W - m if face_left else fx - 30
    advance = int(rng.integers(10, 13))
    text_h = int(rng.integers(14, 17))
    label_h = 9
    pitch = label_h + 4 + text_h + 16
    sig_h = 34
    rows_bottom = bottom - (sig_h + 12)
    y = header_h + 16
    max_glyphs = max(6, min(17, (col_end - col_x) // advance))
    while y + pitch - 16 <= rows_bottom:
        lo = int(rng.integers(3, 6))
        hi = int(rng.integers(max(lo + 6, 10), max_glyphs + 1))
        fx0 = col_x + int(rng.integers(0, 12))
        hi = min(hi, (col_end - fx0) // advance)
        texts.append(StaticText(fx0, y, int(rng.integers(3, 9))))
        ty = y + label_h + 4
        region = BBox(fx0, ty, hi * advance, text_h, RedactionClass.TEXT)
        fields.append(FieldSpec(RedactionClass.TEXT, region, (lo, hi), advance))
        if stripes and rng.random() < 0.5:
            sx0 = max(0, fx0 - 8)
            decorations.append(Decoration("stripes", BBox(sx0, ty - 9, min(col_end + 6, W) - sx0, text_h + 18),
                                          int(rng.integers(215, 231))))
        y += pitch
    # second emblem low in the text column, right of the signature band
    decorations.append(Decoration("emblem", BBox(col_end - sig_h - 6, rows_bottom + 8, sig_h, sig_h),
                                  int(rng.integers(50, 90))))
    if signature:
        sw = min(170, col_end - col_x)
        fields.append(FieldSpec(RedactionClass.SIGNATURE, BBox(col_x, rows_bottom + 8, sw, sig_h)))

    return DocumentTemplate(f"model-{index:02d}", W, H, tuple(fields), tuple(texts),
                            tuple(decorations), seed=int(rng.integers(0, 2**31)))


def default_templates(n: int, seed: int = 0) -> list[DocumentTemplate]:
    return [make_template(i, seed) for i in range(n)]


# ---------------------------------------------------------------- corpus

def _doc_seed(seed: int, model: int, doc: int) -> int:
    return int(np.random.SeedSequence([seed, model, doc]).generate_state(1, np.uint64)[0])


def make_corpus(templates, docs_per_model: int, envelope: PerturbationEnvelope | None = None,
                seed: int = 0, out_dir=".", jobs: int = 1) -> list[ManifestEntry]:
    """Render ``docs_per_model`` documents per template into ``out_dir``.

    Document 0 of every model is left unperturbed and flagged as the reference.
    Output is identical for any ``jobs``.
    """
    envelope = envelope or PerturbationEnvelope()
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(parents=True, exist_ok=True)

    def make_one(task):
        mi, tpl, j = task
        doc_id = f"{tpl.model_id}-{j:03d}"
        doc_seed = _doc_seed(seed, mi, j)
        img, ann = render(tpl, doc_seed, doc_id)
        if j > 0:
            params = envelope.sample(np.random.default_rng(doc_seed))
            img, ann, _ = perturb(img, ann, params)
        image_rel = f"images/{doc_id}.pnm"
        ann_rel = f"annotations/{doc_id}.json"
        ann.image = image_rel
        write_image(img, out / image_rel)
        write_annotation(ann, out / ann_rel)
        return ManifestEntry(doc_id, tpl.model_id, image_rel, ann_rel, j == 0)

    tasks = [(mi, tpl, j) for mi, tpl in enumerate(templates) for j in range(docs_per_model)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(make_one, tasks))
    else:
        entries = [make_one(t) for t in tasks]
    write_manifest(entries, out)
    return entries

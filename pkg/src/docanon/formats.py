"""Annotation JSON schema and corpus manifest.

The same annotation schema carries ground truth, sidecar detections and
redaction outputs::

    {"boxes": [{"class": "text", "h": 16.0, "score": 1.0, "source": "predicted",
                "w": 88.0, "x": 230.0, "y": 71.0}],
     "doc_id": "model-00-003", "height": 400, "image": "images/model-00-003.pnm",
     "schema_version": 1, "width": 640}

Keys are written sorted with a trailing newline so equal documents serialize
to identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .config import read_config  # noqa: F401  (re-exported)
from .errors import SchemaError
from .geometry import AnnotatedDocument, BBox, RedactionClass, Source

SCHEMA_VERSION = 1
SUPPORTED_VERSIONS = (1,)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def box_to_dict(b: BBox) -> dict:
    return {
        "x": float(b.x), "y": float(b.y), "w": float(b.w), "h": float(b.h),
        "class": b.cls.value, "score": float(b.score), "source": b.source.value,
    }


def annotation_to_dict(doc: AnnotatedDocument) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "doc_id": doc.doc_id,
        "image": doc.image,
        "width": int(doc.width),
        "height": int(doc.height),
        "boxes": [box_to_dict(b) for b in doc.boxes],
    }


def _number(d: dict, key: str, path: str) -> float:
    if key not in d:
        raise SchemaError(f"{path}.{key}: missing")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(f"{path}.{key}: expected a finite number, got {v!r}")
    return float(v)


def box_from_dict(d, path: str = "box") -> BBox:
    if not isinstance(d, dict):
        raise SchemaError(f"{path}: expected an object")
    x, y, w, h = (_number(d, k, path) for k in ("x", "y", "w", "h"))
    if w <= 0:
        raise SchemaError(f"{path}.w: must be > 0, got {w:g}")
    if h <= 0:
        raise SchemaError(f"{path}.h: must be > 0, got {h:g}")
    score = _number(d, "score", path) if "score" in d else 1.0
    if not 0.0 <= score <= 1.0:
        raise SchemaError(f"{path}.score: {score:g} outside [0, 1]")
    try:
        cls = RedactionClass.parse(d["class"])
    except KeyError:
        raise SchemaError(f"{path}.class: missing") from None
    except ValueError as exc:
        raise SchemaError(f"{path}.class: {exc}") from None
    try:
        source = Source.parse(d.get("source", "predicted"))
    except ValueError as exc:
        raise SchemaError(f"{path}.source: {exc}") from None
    return BBox(x, y, w, h, cls, score, source)


def annotation_from_dict(d) -> AnnotatedDocument:
    if not isinstance(d, dict):
        raise SchemaError("annotation: expected a JSON object")
    version = d.get("schema_version")
    if version not in SUPPORTED_VERSIONS:
        raise SchemaError(f"schema_version: unsupported version {version!r}")
    doc_id = d.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        raise SchemaError("doc_id: expected a non-empty string")
    dims = {}
    for key in ("width", "height"):
        v = d.get(key)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise SchemaError(f"{key}: expected a positive integer, got {v!r}")
        dims[key] = v
    image = d.get("image")
    if image is not None and not isinstance(image, str):
        raise SchemaError("image: expected a string or null")
    raw = d.get("boxes", [])
    if not isinstance(raw, list):
        raise SchemaError("boxes: expected a list")
    boxes = [box_from_dict(b, f"boxes[{i}]") for i, b in enumerate(raw)]
    return AnnotatedDocument(doc_id, dims["width"], dims["height"], boxes, image)


def dumps_annotation(doc: AnnotatedDocument) -> str:
    return dumps_canonical(annotation_to_dict(doc))


def loads_annotation(text: str) -> AnnotatedDocument:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return annotation_from_dict(data)


def write_annotation(doc: AnnotatedDocument, path) -> None:
    atomic_write_text(path, dumps_annotation(doc))


def read_annotation(path) -> AnnotatedDocument:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads_annotation(text)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- manifest

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    doc_id: str
    model_id: str
    image: str
    annotation: str
    reference: bool = False


def write_manifest(entries, out_dir) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    rows = [
        {"doc_id": e.doc_id, "model_id": e.model_id, "image": e.image,
         "annotation": e.annotation, "reference": bool(e.reference)}
        for e in entries
    ]
    atomic_write_text(path, dumps_canonical(rows))
    return path


def read_manifest(corpus_dir) -> list[ManifestEntry]:
    corpus_dir = Path(corpus_dir)
    path = corpus_dir / MANIFEST_NAME if corpus_dir.is_dir() else corpus_dir
    with open(path, encoding="utf-8") as fh:
        try:
            rows = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(rows, list):
        raise SchemaError(f"{path}: manifest must be a JSON array")
    entries, seen = [], set()
    for i, r in enumerate(rows):
        if not isinstance(r, dict):
            raise SchemaError(f"{path}: [{i}] expected an object")
        for key in ("doc_id", "model_id", "image", "annotation"):
            if not isinstance(r.get(key), str) or not r[key]:
                raise SchemaError(f"{path}: [{i}].{key} expected a non-empty string")
        if r["doc_id"] in seen:
            raise SchemaError(f"{path}: [{i}].doc_id {r['doc_id']!r} duplicated")
        seen.add(r["doc_id"])
        entries.append(ManifestEntry(r["doc_id"], r["model_id"], r["image"], r["annotation"],
                                     bool(r.get("reference", False))))
    return entries

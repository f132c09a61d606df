"""End-to-end redaction of one document, and corpus access shared by the CLI and evaluation."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig
from .detectors import DetectionSet, detect_all
from .errors import AlignmentError, ConfigError
from .features import align_detailed, detect_keypoints
from .formats import ManifestEntry, read_annotation, read_manifest
from .geometry import AffineTransform, AnnotatedDocument
from .raster import Raster, read_image
from .redactor import baseline_auto, baseline_copy, redact_aligned, transform_reference
from .retrieval import EmbeddingStore, best_match, embed_thumbnail

METHODS = ("proposed", "copy", "auto")


class Corpus:
    """Read-only view of a corpus directory with thread-safe caches."""

    def __init__(self, root):
        self.root = Path(root)
        self.entries: list[ManifestEntry] = read_manifest(self.root)
        self._by_id = {e.doc_id: e for e in self.entries}
        self._lock = threading.Lock()
        self._images: dict[str, Raster] = {}
        self._annotations: dict[str, AnnotatedDocument] = {}
        self._keypoints: dict[str, list] = {}

    def is_reference(self, doc_id: str) -> bool:
        e = self._by_id.get(doc_id)
        return e is not None and e.reference

    def entry(self, doc_id: str) -> ManifestEntry:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise KeyError(f"doc_id {doc_id!r} not in corpus {self.root}") from None

    def references(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.reference]

    def _cached(self, cache, key, load):
        with self._lock:
            if key in cache:
                return cache[key]
        value = load()
        with self._lock:
            return cache.setdefault(key, value)

    def image(self, doc_id: str) -> Raster:
        return self._cached(self._images, doc_id, lambda: read_image(self.root / self.entry(doc_id).image))

    def annotation(self, doc_id: str) -> AnnotatedDocument:
        return self._cached(self._annotations, doc_id,
                            lambda: read_annotation(self.root / self.entry(doc_id).annotation))

    def keypoints(self, doc_id: str, config: PipelineConfig):
        f = config.features
        key = f"{doc_id}\0{f.max_keypoints}\0{f.fast_threshold}"
        return self._cached(self._keypoints, key,
                            lambda: detect_keypoints(self.image(doc_id), f.max_keypoints, f.fast_threshold))


def build_store(corpus: Corpus, include_all: bool = False) -> EmbeddingStore:
    """Thumbnail embeddings of the corpus references (or of every document)."""
    entries = corpus.entries if include_all else corpus.references()
    store = None
    for e in entries:
        v = embed_thumbnail(corpus.image(e.doc_id))
        store = store or EmbeddingStore(len(v))
        store.add(e.doc_id, e.model_id, v)
    if store is None:
        raise ValueError(f"no documents to index in {corpus.root}")
    return store


def find_reference(store: EmbeddingStore, img: Raster, exclude=()):
    """Top-1 stored document for ``img``; returns (record, similarity)."""
    pool = store.without(exclude) if exclude else store
    return best_match(pool, embed_thumbnail(img))


@dataclass
class Outcome:
    document: AnnotatedDocument
    reference_id: str | None = None
    transform: AffineTransform | None = None
    transferred: list = field(default_factory=list)  # reference boxes surviving transfer and clipping
    note: str | None = None


def run_method(method: str, img: Raster, doc_id: str, *, store: EmbeddingStore | None = None,
               corpus: Corpus | None = None, sidecar: DetectionSet | None = None,
               config: PipelineConfig | None = None) -> Outcome:
    """Redact one image with ``proposed``, ``copy`` or ``auto``.

    ``auto`` uses only the detectors.  The other two retrieve the most similar
    stored document and load its annotation from ``corpus``; ``doc_id`` itself
    is excluded from retrieval unless it is a flagged reference, whose own
    redactions are authoritative.  ``proposed`` falls back to ``copy`` when alignment fails and
    says so in ``Outcome.note``.
    """
    config = config or PipelineConfig()
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    W, H = img.width, img.height
    if method == "auto":
        dets = detect_all(img, sidecar, doc_id, config.detector)
        return Outcome(baseline_auto(DetectionSet(doc_id, dets.boxes), W, H))

    if store is None or corpus is None:
        raise ConfigError(f"method {method!r} needs an embedding store and a corpus")
    exclude = [] if corpus.is_reference(doc_id) else [doc_id]
    record, _ = find_reference(store, img, exclude=exclude)
    ref_ann = corpus.annotation(record.doc_id)

    def copy(note=None):
        doc = baseline_copy(ref_ann, W, H, doc_id, config.clip_min_fraction)
        return Outcome(doc, record.doc_id, None, list(doc.boxes), note)

    if method == "copy":
        return copy()
    dets = detect_all(img, sidecar, doc_id, config.detector)
    try:
        alignment = align_detailed(corpus.image(record.doc_id), img, config.features, config.ransac,
                                   reference_keypoints=corpus.keypoints(record.doc_id, config))
    except AlignmentError as exc:
        return copy(f"alignment failed ({exc}); fell back to copy-reference")
    t = alignment.transform
    transferred = transform_reference(ref_ann, t, W, H, config.clip_min_fraction)
    doc = redact_aligned(t, W, H, ref_ann, dets, config, doc_id)
    return Outcome(doc, record.doc_id, t, transferred)

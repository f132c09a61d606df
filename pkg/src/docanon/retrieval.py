"""Exact cosine-similarity retrieval of the reference document.

Stores persist as JSON Lines, one ``{"doc_id", "model_id", "vector"}`` record
per line; vectors are stored at float32 precision and compared in float64.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .formats import atomic_write_text
from .raster import Raster

THUMB = 16


@dataclass(frozen=True)
class EmbeddingRecord:
    doc_id: str
    model_id: str
    vector: tuple[float, ...]

    def array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=np.float64)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"vector length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine of a zero-norm vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Rows average the input cells that overlap each output cell, by overlap length."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    lo = np.arange(n_in, dtype=np.float64)
    hi = lo + 1.0
    overlap = np.clip(np.minimum(hi[None, :], edges[1:, None]) - np.maximum(lo[None, :], edges[:-1, None]), 0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def embed_thumbnail(img: Raster) -> np.ndarray:
    """Zero-mean, unit-norm 16x16 area-average thumbnail (256 values)."""
    g = img.to_gray().pixels.astype(np.float64)
    thumb = _area_weights(g.shape[0], THUMB) @ g @ _area_weights(g.shape[1], THUMB).T
    v = thumb.ravel() - thumb.mean()
    n = np.linalg.norm(v)
    if n <= 1e-9:
        raise ValueError("cannot embed a constant image")
    return v / n


@dataclass
class EmbeddingStore:
    dimension: int
    records: list[EmbeddingRecord] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            self._check(r, seen)
            seen.add(r.doc_id)
        self._matrix = None

    def _check(self, r: EmbeddingRecord, seen) -> None:
        if r.doc_id in seen:
            raise ValueError(f"duplicate doc_id {r.doc_id!r}")
        if len(r.vector) != self.dimension:
            raise ValueError(f"{r.doc_id}: vector length {len(r.vector)} != {self.dimension}")
        if not np.linalg.norm(r.array()) > 0:
            raise ValueError(f"{r.doc_id}: zero-norm vector")

    def add(self, doc_id: str, model_id: str, vector) -> EmbeddingRecord:
        rec = EmbeddingRecord(doc_id, model_id, tuple(float(np.float32(x)) for x in vector))
        self._check(rec, {r.doc_id for r in self.records})
        self.records.append(rec)
        self._matrix = None
        return rec

    def __len__(self):
        return len(self.records)

    def without(self, doc_ids) -> "EmbeddingStore":
        drop = set(doc_ids)
        return EmbeddingStore(self.dimension, [r for r in self.records if r.doc_id not in drop])

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            m = np.array([r.vector for r in self.records], dtype=np.float64).reshape(-1, self.dimension)
            self._matrix = m / np.linalg.norm(m, axis=1, keepdims=True)
        return self._matrix

    def save(self, path) -> None:
        lines = [json.dumps({"doc_id": r.doc_id, "model_id": r.model_id, "vector": list(r.vector)})
                 for r in self.records]
        atomic_write_text(path, "".join(line + "\n" for line in lines))

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        records = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc})") from None
                if not isinstance(d, dict) or not isinstance(d.get("doc_id"), str) \
                        or not isinstance(d.get("model_id"), str) or not isinstance(d.get("vector"), list):
                    raise SchemaError(f"{path}:{lineno}: expected doc_id, model_id and vector")
                vec = d["vector"]
                if not vec or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                      and math.isfinite(x) for x in vec):
                    raise SchemaError(f"{path}:{lineno}: vector must be non-empty finite numbers")
                records.append(EmbeddingRecord(d["doc_id"], d["model_id"],
                                               tuple(float(np.float32(x)) for x in vec)))
        if not records:
            raise SchemaError(f"{path}: empty embedding file")
        try:
            return cls(len(records[0].vector), records)
        except ValueError as exc:
            raise SchemaError(f"{path}: {exc}") from None


def similarities(store: EmbeddingStore, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (store.dimension,):
        raise ValueError(f"query length {q.shape} does not match store dimension {store.dimension}")
    nq = np.linalg.norm(q)
    if nq == 0:
        raise ValueError("zero-norm query")
    return np.clip(store.matrix() @ (q / nq), -1.0, 1.0)


def best_match(store: EmbeddingStore, query) -> tuple[EmbeddingRecord, float]:
    """Most similar record and its cosine; ties go to the smallest doc_id."""
    if not store.records:
        raise ValueError("empty embedding store")
    sims = similarities(store, query)
    best = sims.max()
    cands = [store.records[i] for i in np.flatnonzero(sims == best)]
    rec = min(cands, key=lambda r: r.doc_id)
    return rec, float(best)


def top1(store: EmbeddingStore, query) -> EmbeddingRecord:
    return best_match(store, query)[0]


def retrieval_accuracy(store: EmbeddingStore, queries) -> float:
    """Share of ``(vector, model_id)`` queries whose top-1 record has that model."""
    queries = list(queries)
    if not queries:
        raise ValueError("no queries")
    hits = sum(top1(store, v).model_id == model for v, model in queries)
    return hits / len(queries)

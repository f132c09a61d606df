"""Redaction quality: optimal IoU matching, mean Hungarian IoU, AP/mAP and reports.

Conventions:

* mHIoU is the total IoU of an optimal one-to-one assignment divided by
  ``max(|preds|, |gts|)``, so misses and spurious boxes cost the same.  Two
  empty lists agree perfectly (1.0).  On a whole document the assignment is
  made per class and the denominators are summed over classes.
* AP is the 101-point interpolated area under the precision/recall curve with
  greedy score-ordered matching.  mAP averages thresholds 0.50 to 0.95 (step
  0.05) and the classes present in the ground truth.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .formats import SCHEMA_VERSION, dumps_canonical
from .geometry import AnnotatedDocument, BBox, RedactionClass, iou_matrix

THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
METRIC_KEYS = ("mhiou", "map", "map50", "map75")
CLASS_ORDER = (RedactionClass.FACE, RedactionClass.TEXT, RedactionClass.SIGNATURE,
               RedactionClass.MRZ, RedactionClass.BARCODE)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]  # (pred index, gt index, iou)
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]

    @property
    def total_iou(self) -> float:
        return float(sum(p[2] for p in self.pairs))


def hungarian_match(preds, gts) -> MatchResult:
    """Assignment maximising total IoU; zero-IoU pairs count as unmatched."""
    preds, gts = list(preds), list(gts)
    pairs = []
    if preds and gts:
        m = iou_matrix(preds, gts)
        rows, cols = linear_sum_assignment(m, maximize=True)
        pairs = [(int(i), int(j), float(m[i, j])) for i, j in zip(rows, cols) if m[i, j] > 0]
    mp = {p[0] for p in pairs}
    mg = {p[1] for p in pairs}
    return MatchResult(tuple(pairs),
                       tuple(i for i in range(len(preds)) if i not in mp),
                       tuple(j for j in range(len(gts)) if j not in mg))


def mhiou(preds, gts) -> float:
    preds, gts = list(preds), list(gts)
    denom = max(len(preds), len(gts))
    if denom == 0:
        return 1.0
    return hungarian_match(preds, gts).total_iou / denom


def _by_class(boxes):
    out: dict[RedactionClass, list[BBox]] = {}
    for b in boxes:
        out.setdefault(b.cls, []).append(b)
    return out


def document_mhiou(preds, gts) -> float:
    """Class-aware mHIoU: boxes only match boxes of their own class."""
    p, g = _by_class(preds), _by_class(gts)
    total, denom = 0.0, 0
    for cls in set(p) | set(g):
        pc, gc = p.get(cls, []), g.get(cls, [])
        denom += max(len(pc), len(gc))
        total += hungarian_match(pc, gc).total_iou
    return 1.0 if denom == 0 else total / denom


def _ranking(preds):
    return sorted(range(len(preds)),
                  key=lambda i: (-preds[i].score, -preds[i].area, preds[i].y, preds[i].x, i))


def average_precision(preds, gts, iou_threshold: float) -> float:
    preds, gts = list(preds), list(gts)
    if not gts:
        return 0.0 if preds else 1.0
    if not preds:
        return 0.0
    ious = iou_matrix(preds, gts)
    taken = np.zeros(len(gts), dtype=bool)
    tp = np.zeros(len(preds))
    for rank, i in enumerate(_ranking(preds)):
        row = np.where(taken, -1.0, ious[i])
        j = int(row.argmax())
        if row[j] > 0 and row[j] >= iou_threshold:
            taken[j] = True
            tp[rank] = 1.0
    ctp = np.cumsum(tp)
    recall = ctp / len(gts)
    precision = ctp / np.arange(1, len(preds) + 1)
    # precision envelope: best precision at any recall at or beyond each point
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(sampled.mean())


def class_ap_sweep(preds, gts) -> tuple[float, float, float]:
    """(mAP over the threshold sweep, AP@0.50, AP@0.75) for one class."""
    aps = {t: average_precision(preds, gts, t) for t in THRESHOLDS}
    return float(np.mean(list(aps.values()))), aps[0.5], aps[0.75]


def map_sweep(preds, gts) -> tuple[float, float, float]:
    """(mAP, mAP50, mAP75) averaged over the classes present in ``gts``."""
    p, g = _by_class(preds), _by_class(gts)
    if not g:
        v = 0.0 if p else 1.0
        return v, v, v
    rows = [class_ap_sweep(p.get(cls, []), g[cls]) for cls in sorted(g, key=CLASS_ORDER.index)]
    return tuple(float(np.mean(col)) for col in zip(*rows))


def score_document(preds, gts) -> dict:
    """Aggregate and per-class metrics of one document (classes absent from GT are omitted)."""
    p, g = _by_class(preds), _by_class(gts)
    m, m50, m75 = map_sweep(preds, gts)
    per_class = {}
    for cls in CLASS_ORDER:
        if cls in g:
            cm, c50, c75 = class_ap_sweep(p.get(cls, []), g[cls])
            per_class[cls.value] = {"mhiou": mhiou(p.get(cls, []), g[cls]), "map": cm,
                                    "map50": c50, "map75": c75}
    return {"overall": {"mhiou": document_mhiou(preds, gts), "map": m, "map50": m50, "map75": m75},
            "per_class": per_class}


# ---------------------------------------------------------------- corpus evaluation

def _mean_rows(rows) -> dict | None:
    rows = list(rows)
    if not rows:
        return None
    out = {k: float(np.mean([r[k] for r in rows])) for k in METRIC_KEYS}
    out["documents"] = len(rows)
    return out


def _aggregate(docs) -> dict:
    return {
        "overall": _mean_rows(d["overall"] for d in docs),
        "per_class": {cls.value: _mean_rows(d["per_class"][cls.value] for d in docs
                                            if cls.value in d["per_class"])
                      for cls in CLASS_ORDER},
    }


@dataclass
class EvalReport:
    methods: list[dict] = field(default_factory=list)

    def method(self, name: str) -> dict:
        for m in self.methods:
            if m["name"] == name:
                return m
        raise KeyError(name)

    def overall(self, name: str, key: str = "mhiou") -> float:
        return self.method(name)["overall"][key]

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "thresholds": list(THRESHOLDS), "methods": self.methods}

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(json.loads(text)["methods"])

    def to_table(self) -> str:
        header = ["Method", "mHIoU", "mAP", "mAP50", "mAP75"] + [c.value.capitalize() if c is not RedactionClass.MRZ
                                                                 else "MRZ" for c in CLASS_ORDER]
        sections = [("All documents", [(m["name"], m["overall"], m["per_class"]) for m in self.methods])]
        models = sorted({k for m in self.methods for k in m["per_model"]})
        for model in models:
            sections.append((model, [(m["name"], m["per_model"][model]["overall"], m["per_model"][model]["per_class"])
                                     for m in self.methods if model in m["per_model"]]))

        def fmt(v):
            return "N/A" if v is None else f"{v:.3f}"

        lines = []
        for title, rows in sections:
            body = [[name] + [fmt(ov[k] if ov else None) for k in METRIC_KEYS]
                    + [fmt(pc[c.value]["map"] if pc.get(c.value) else None) for c in CLASS_ORDER]
                    for name, ov, pc in rows]
            widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
            render = lambda r: "  ".join(v.ljust(w) if i == 0 else v.rjust(w)
                                         for i, (v, w) in enumerate(zip(r, widths)))
            lines += [title, render(header), "  ".join("-" * w for w in widths)]
            lines += [render(r) for r in body] + [""]
        return "\n".join(lines)


def evaluate_corpus(methods, corpus, jobs: int = 1) -> EvalReport:
    """Score each ``(name, producer)`` on every non-reference document of ``corpus``.

    ``corpus`` needs ``entries`` (manifest entries) and ``annotation(doc_id)``;
    ``producer(entry)`` returns the method's AnnotatedDocument for that entry.
    Documents are scored independently; aggregates are unweighted means over
    documents, overall and per document model.
    """
    entries = [e for e in corpus.entries if not e.reference]
    report = EvalReport()
    for name, producer in methods:
        def run(entry):
            out: AnnotatedDocument = producer(entry)
            scores = score_document(out.boxes, corpus.annotation(entry.doc_id).boxes)
            return {"doc_id": entry.doc_id, "model_id": entry.model_id, **scores}

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                docs = list(pool.map(run, entries))
        else:
            docs = [run(e) for e in entries]
        per_model = {}
        for model in sorted({d["model_id"] for d in docs}):
            per_model[model] = _aggregate([d for d in docs if d["model_id"] == model])
        report.methods.append({"name": name, **_aggregate(docs), "per_model": per_model, "documents": docs})
    return report

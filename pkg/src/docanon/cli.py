"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 bad or missing input data,
3 pipeline failure (alignment).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PipelineConfig, read_config
from .detectors import detect_all, load_sidecar, write_sidecar
from .errors import AlignmentError, AnonError
from .features import align_detailed
from .formats import atomic_write_text, read_annotation, write_annotation
from .metrics import evaluate_corpus
from .pipeline import METHODS, Corpus, build_store, find_reference, run_method
from .raster import read_image, write_image
from .redactor import render
from .retrieval import EmbeddingStore
from .synthdoc import PerturbationEnvelope, default_templates, make_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PIPELINE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> PipelineConfig:
    return read_config(args.config) if getattr(args, "config", None) else PipelineConfig()


def _doc_id(args) -> str:
    return args.doc_id or Path(args.image).stem


def cmd_synth(args):
    envelope = PerturbationEnvelope(max_rotation=args.max_rotation, max_translation=args.max_translation,
                                    noise=args.noise)
    entries = make_corpus(default_templates(args.templates, args.seed), args.docs_per_model, envelope,
                          args.seed, args.out, jobs=args.jobs)
    print(f"wrote {len(entries)} documents to {args.out}")


def cmd_index(args):
    corpus = Corpus(args.corpus)
    if args.embedder == "thumbnail":
        store = build_store(corpus, include_all=args.all)
    else:
        if not args.vectors:
            raise UsageError("index: --embedder file needs --vectors FILE")
        ext = EmbeddingStore.load(args.vectors)
        keep = {e.doc_id for e in (corpus.entries if args.all else corpus.references())}
        store = ext.without([r.doc_id for r in ext.records if r.doc_id not in keep])
        if not store.records:
            raise ValueError(f"{args.vectors}: no vectors for the selected corpus documents")
    store.save(args.out)
    print(f"indexed {len(store)} documents into {args.out}")


def cmd_retrieve(args):
    store = EmbeddingStore.load(args.store)
    record, sim = find_reference(store, read_image(args.image), exclude=args.exclude or ())
    print(f"{record.doc_id} {record.model_id} {sim:.6f}")


def cmd_align(args):
    config = _config(args)
    a = align_detailed(read_image(args.reference), read_image(args.target), config.features, config.ransac)
    for row in a.transform.m:
        print(" ".join(f"{v:.9g}" for v in row))
    print(f"inliers {a.inliers} matches {a.matches}")


def cmd_detect(args):
    img = read_image(args.image)
    sidecar = load_sidecar(args.sidecar) if args.sidecar else None
    dets = detect_all(img, sidecar, _doc_id(args), _config(args).detector)
    if args.doc_id:
        dets.doc_id = args.doc_id
    write_sidecar(dets, args.out, img.width, img.height)
    print(f"{len(dets.boxes)} detections written to {args.out}")


def cmd_redact(args):
    config = _config(args)
    img = read_image(args.image)
    doc_id = _doc_id(args)
    sidecar = load_sidecar(args.sidecar) if args.sidecar else None
    store = corpus = None
    if args.method != "auto":
        if not args.store or not args.corpus:
            raise UsageError(f"redact: --method {args.method} needs --store and --corpus")
        store, corpus = EmbeddingStore.load(args.store), Corpus(args.corpus)
    out = run_method(args.method, img, doc_id, store=store, corpus=corpus, sidecar=sidecar, config=config)
    if out.note:
        print(f"{doc_id}: {out.note}", file=sys.stderr)
    out.document.image = str(args.image)
    write_annotation(out.document, args.out)
    if args.render:
        write_image(render(img, out.document.boxes, args.mode), args.render)
    ref = f" reference {out.reference_id}" if out.reference_id else ""
    print(f"{len(out.document.boxes)} redactions written to {args.out}{ref}")


def cmd_evaluate(args):
    config = _config(args)
    corpus = Corpus(args.corpus)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"evaluate: unknown method {m!r}; choose from {','.join(METHODS)}")
    store = EmbeddingStore.load(args.store) if args.store else build_store(corpus)

    def producer(method):
        def produce(entry):
            sidecar = None
            if args.sidecars:
                path = Path(args.sidecars) / f"{entry.doc_id}.json"
                sidecar = load_sidecar(path) if path.exists() else None
            out = run_method(method, corpus.image(entry.doc_id), entry.doc_id, store=store,
                             corpus=corpus, sidecar=sidecar, config=config)
            if out.note:
                print(f"{entry.doc_id}: {out.note}", file=sys.stderr)
            return out.document
        return produce

    report = evaluate_corpus([(m, producer(m)) for m in methods], corpus, jobs=args.jobs)
    atomic_write_text(args.report, report.to_json())
    if args.table:
        atomic_write_text(args.table, report.to_table())
    best = max(methods, key=lambda m: report.overall(m))
    summary = ", ".join(f"{m} {report.overall(m):.3f}" for m in methods)
    print(f"mHIoU: {summary} (best: {best})")


def cmd_render(args):
    img = read_image(args.image)
    ann = read_annotation(args.annotation)
    write_image(render(img, ann.boxes, args.mode), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="docanon", description="Reference-guided redaction of document images.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--templates", type=int, default=3)
    s.add_argument("--docs-per-model", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--max-rotation", type=float, default=3.0)
    s.add_argument("--max-translation", type=float, default=12.0)
    s.add_argument("--noise", type=int, default=4)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("index", help="build an embedding store")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--embedder", choices=("thumbnail", "file"), default="thumbnail")
    s.add_argument("--vectors", help="JSONL of external embeddings (with --embedder file)")
    s.add_argument("--all", action="store_true", help="index every document, not only references")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("retrieve", help="print the most similar stored document")
    s.add_argument("--store", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--exclude", action="append", metavar="DOC_ID")
    s.set_defaults(func=cmd_retrieve)

    s = sub.add_parser("align", help="estimate the reference-to-target affine map")
    s.add_argument("--reference", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("detect", help="run the detectors")
    s.add_argument("--image", required=True)
    s.add_argument("--sidecar")
    s.add_argument("--out", required=True)
    s.add_argument("--doc-id")
    s.add_argument("--config")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("redact", help="redact one document")
    s.add_argument("--image", required=True)
    s.add_argument("--store")
    s.add_argument("--corpus")
    s.add_argument("--sidecar")
    s.add_argument("--method", choices=METHODS, default="proposed")
    s.add_argument("--out", required=True)
    s.add_argument("--render")
    s.add_argument("--mode", choices=("blackout", "overlay"), default="blackout")
    s.add_argument("--doc-id")
    s.add_argument("--config")
    s.set_defaults(func=cmd_redact)

    s = sub.add_parser("evaluate", help="score methods on a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--methods", default=",".join(METHODS))
    s.add_argument("--report", required=True)
    s.add_argument("--table")
    s.add_argument("--store", help="embedding store (default: thumbnails of the corpus references)")
    s.add_argument("--sidecars", help="directory of <doc_id>.json detection sidecars")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--config")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("render", help="draw an annotation onto its image")
    s.add_argument("--image", required=True)
    s.add_argument("--annotation", required=True)
    s.add_argument("--mode", choices=("blackout", "overlay"), default="overlay")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except AlignmentError as exc:
        print(f"error: alignment failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (AnonError, OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())

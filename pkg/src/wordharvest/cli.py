"""Operator command line: every verb is a thin wrapper over one library
operation, so anything reachable here is reachable in tests through the
modules directly.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .ballpark import CapacityQuery, capacity_estimate
from .errors import WordharvestError
from .harvest import EngineConfig, RecomputeRequest, simulate_user
from .store import export_pagexml, export_transcription, export_wordlist, load_collection, persist_collection

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _emit(args, payload: dict, plain: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(plain)


def _load_root(args):
    return load_collection(Path(args.root))


def cmd_ingest(args) -> int:
    from .imaging import load_page
    from .service import ingest_page

    root = Path(args.root)
    if (root / "manifest.json").exists():
        engine = load_collection(root)
    else:
        from .harvest import Engine

        engine = Engine(config=EngineConfig())
    src = Path(args.directory)
    files = sorted(
        p for p in src.iterdir() if p.suffix.lower() in (".pgm", ".pnm", ".png")
    )
    if not files:
        raise WordharvestError(f"no page images in {src}")
    reports = []
    for path in files:
        gray = load_page(path)
        reports.append(
            ingest_page(
                engine,
                page_id=path.stem,
                book_id=args.book or engine.config.default_book,
                gray=gray,
                segment=False,
            )
        )
    persist_collection(engine, root)
    payload = {"pages": [r["page_id"] for r in reports], "root": str(root)}
    _emit(args, payload, f"ingested {len(reports)} pages into {root}")
    return EXIT_OK


def cmd_segment(args) -> int:
    from .service import segment_page

    engine = _load_root(args)
    done = []
    for page_id in sorted(engine.pages):
        page_zones = [
            z for z in engine.zones.values() if z.zone.page_id == page_id
        ]
        if page_zones:
            continue
        done.append(segment_page(engine, page_id))
    persist_collection(engine, Path(args.root))
    payload = {"segmented": done}
    total = sum(r["n_zones"] for r in done)
    _emit(args, payload, f"segmented {len(done)} pages, {total} zones")
    return EXIT_OK


def cmd_train(args) -> int:
    engine = _load_root(args)
    now = time.time()
    for key in sorted(engine.classes):
        if engine.classes[key].n_labels and key not in engine.pending:
            engine.pending[key] = RecomputeRequest(
                class_key=key, reason="policy", enqueued_at=now, debounce_deadline=now
            )
    report = engine.run_cycle(now=now + engine.config.debounce_seconds + 1)
    persist_collection(engine, Path(args.root))
    _emit(
        args,
        report.to_json(),
        f"cycle {report.cycle_index}: retrained {len(report.classes_retrained)} classes",
    )
    return EXIT_OK


def cmd_mine(args) -> int:
    engine = _load_root(args)
    state = engine.classes.get(args.class_key)
    if state is None:
        raise WordharvestError(f"no class {args.class_key}")
    if state.hitlist is None:
        raise WordharvestError(f"class {args.class_key} has no ranked model yet")
    entries = state.hitlist.entries
    if args.limit:
        entries = entries[: args.limit]
    payload = {
        "class_key": args.class_key,
        "model_version": state.hitlist.model_version,
        "entries": [
            {"zone_id": e.zone_id, "score": e.score, "already_labeled": e.already_labeled}
            for e in entries
        ],
    }
    plain = "\n".join(
        f"{e.zone_id}\t{e.score:.6f}\t{'labeled' if e.already_labeled else ''}".rstrip()
        for e in entries
    )
    _emit(args, payload, plain)
    return EXIT_OK


def cmd_export(args) -> int:
    engine = _load_root(args)
    if args.kind == "wordlist":
        content = export_wordlist(engine)
    elif args.kind == "transcription":
        if not args.page:
            raise WordharvestError("transcription export needs --page")
        content = export_transcription(engine, args.page)
    else:
        if not args.page:
            raise WordharvestError("pagexml export needs --page")
        content = export_pagexml(engine, args.page)
    if args.out:
        Path(args.out).write_text(content, encoding="utf-8")
        _emit(args, {"kind": args.kind, "out": args.out}, f"wrote {args.out}")
    else:
        sys.stdout.write(content)
    return EXIT_OK


def cmd_corpus_gen(args) -> int:
    from .corpus import CorpusSpec, corpus_digest, generate_corpus, write_corpus

    spec = CorpusSpec(
        classes=args.classes,
        per_class=args.per_class,
        seed=args.seed,
        styles=args.styles,
        books=args.books,
    )
    corpus = generate_corpus(spec)
    digest = corpus_digest(corpus)
    if args.out:
        write_corpus(corpus, Path(args.out))
    payload = {
        "digest": digest,
        "classes": args.classes,
        "per_class": args.per_class,
        "seed": args.seed,
        "n_pages": len(corpus.pages),
    }
    _emit(args, payload, digest)
    return EXIT_OK


def cmd_simulate_user(args) -> int:
    from .corpus import CorpusSpec, generate_corpus, prepare_engine

    spec = CorpusSpec(
        classes=args.classes, per_class=args.per_class, seed=args.seed
    )
    corpus = generate_corpus(spec)
    engine, truth, test_set = prepare_engine(corpus, seed=args.seed)
    report = simulate_user(
        engine,
        truth,
        test_set,
        policy=args.policy,
        interactions=args.interactions,
        seed=args.seed,
    )
    _emit(
        args,
        report.to_json(),
        f"{report.policy}: {report.labels} labels in {report.interactions_run} "
        f"interactions ({report.labels_per_interaction:.2f}/interaction, "
        f"post-warmup {report.post_warmup_rate:.2f})",
    )
    return EXIT_OK


def cmd_experiment(args) -> int:
    from . import experiments

    if args.name == "perf-density":
        corpus = None
        if args.classes:
            spec = experiments.reference_spec(
                classes=args.classes,
                per_class=max(args.levels) + 6,
                seed=args.seed,
            )
            from .corpus import generate_corpus

            corpus = generate_corpus(spec)
        report = experiments.perf_density(
            corpus=corpus, levels=tuple(args.levels), seed=args.seed
        )
        if args.out:
            Path(args.out).write_text(report.csv(), encoding="utf-8")
        if getattr(args, "json", False):
            print(json.dumps(report.to_json(), sort_keys=True))
        elif not args.out:
            sys.stdout.write(report.csv())
        return EXIT_OK
    reference = experiments.split_class_reference(seed=args.seed)
    planted = experiments.split_class_planted(seed=args.seed)
    payload = {"reference": reference.to_json(), "planted": planted.to_json()}
    plain = (
        f"reference: lumped {reference.report.lumped_accuracy:.3f} "
        f"vs split {reference.report.split_accuracy:.3f}\n"
        f"planted-two-styles: lumped {planted.report.lumped_accuracy:.3f} "
        f"vs split {planted.report.split_accuracy:.3f}"
    )
    _emit(args, payload, plain)
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .harvest import harvest_curve, peak_rate

    engine = _load_root(args)
    points = harvest_curve(
        engine.log.events,
        book_of=engine.book_of,
        book_id=args.book,
        bucket_seconds=args.bucket,
    )
    payload = {
        "series": [
            {
                "timestamp": p.timestamp,
                "cumulative_labels": p.cumulative_labels,
                "book_id": p.book_id,
            }
            for p in points
        ],
        "peak_labels_per_minute": peak_rate(engine.log.events),
    }
    lines = ["timestamp,cumulative_labels,book_id"]
    lines.extend(f"{p.timestamp},{p.cumulative_labels},{p.book_id}" for p in points)
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_capacity(args) -> int:
    estimate = capacity_estimate(
        CapacityQuery(
            weights=args.weights,
            dropout_p=args.dropout,
            samples_per_coeff=args.samples_per_coeff,
        )
    )
    _emit(args, {"estimate": estimate}, str(estimate))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import Service, serve

    service = Service()
    if args.root:
        engine = load_collection(Path(args.root))
        collection_id = engine.collection_meta.get("collection_id", "collection")
        service.add_collection(collection_id, engine)
    serve(service, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wordharvest",
        description="Word spotting and label harvesting for scanned handwriting.",
    )
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="register page scans from a directory")
    p.add_argument("directory")
    p.add_argument("--root", required=True, help="collection directory")
    p.add_argument("--book", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="segment unsegmented pages into word zones")
    p.add_argument("--root", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="retrain all labeled classes")
    p.add_argument("--root", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mine", help="print a class hit list")
    p.add_argument("class_key")
    p.add_argument("--root", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("export", help="export wordlist, transcription, or PAGE XML")
    p.add_argument("kind", choices=["wordlist", "transcription", "pagexml"])
    p.add_argument("--root", required=True)
    p.add_argument("--page", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("corpus-gen", help="generate a deterministic synthetic corpus")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--styles", type=int, default=1)
    p.add_argument("--books", type=int, default=2)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_corpus_gen)

    p = sub.add_parser("simulate-user", help="run a simulated labeling session")
    p.add_argument("--policy", choices=["prospects", "sequential"], required=True)
    p.add_argument("--interactions", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--classes", type=int, default=12)
    p.add_argument("--per-class", type=int, default=26)
    p.set_defaults(func=cmd_simulate_user)

    p = sub.add_parser("experiment", help="run a reference experiment")
    p.add_argument("name", choices=["perf-density", "split-class"])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--levels", type=int, nargs="+", default=[5, 100, 200])
    p.add_argument("--classes", type=int, default=None, help="smaller corpus override")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("metrics", help="harvest curve as CSV")
    p.add_argument("--root", required=True)
    p.add_argument("--bucket", type=float, default=60.0, help="bucket seconds")
    p.add_argument("--book", default=None, help="restrict to one book")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("capacity", help="labeled-sample requirement estimate")
    p.add_argument("--weights", type=int, required=True)
    p.add_argument("--dropout", default="0", help="dropout probability, exact decimal")
    p.add_argument("--samples-per-coeff", type=int, default=5)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--root", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except WordharvestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())

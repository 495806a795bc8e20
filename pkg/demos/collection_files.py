"""Tour of the on-disk collection format.

Everything a session produces lives in flat, inspectable files under one
directory.  The only mutable truth is events.jsonl: models, hit lists,
and version numbers are rebuilt by replaying it, so a reload is
guaranteed to land in the same state the session left behind.
"""

import tempfile
from pathlib import Path

from wordharvest.corpus import CorpusSpec, generate_corpus, prepare_engine
from wordharvest.harvest import EngineConfig, LabelDraft
from wordharvest.store import export_wordlist, load_collection, persist_collection

DESK = EngineConfig(hot_label_threshold=1, debounce_seconds=0.0)
NOW = 1_000_000.0


def main():
    corpus = generate_corpus(CorpusSpec(classes=4, per_class=10, seed=3))
    engine, truth, _ = prepare_engine(corpus, engine_config=DESK, test_per_class=2, seed=3)

    # label three instances of each word, then let the engine retrain
    by_class: dict[str, list[str]] = {}
    for zone_id, label in sorted(truth.items()):
        by_class.setdefault(label, []).append(zone_id)
    drafts = [
        LabelDraft(zone_id=z, label=label, action="new", mode="widening")
        for label, zones in sorted(by_class.items())
        for z in zones[:3]
    ]
    engine.submit_labels(drafts, batch_id="seed-batch", now=NOW)
    engine.run_cycle(now=NOW + 1)

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "demo-collection"
        persist_collection(engine, root, collection_id="demo", name="store tour")

        print("collection layout:")
        for path in sorted(root.rglob("*")):
            if path.is_file():
                rel = path.relative_to(root)
                print(f"  {str(rel):<28} {path.stat().st_size:>8} bytes")

        print("\nfirst two label events (the replayable truth):")
        events = (root / "events.jsonl").read_text(encoding="utf-8").splitlines()
        for line in events[:2]:
            print(f"  {line}")
        print(f"  ... {len(events)} events total")

        loaded = load_collection(root)
        same = loaded.state_fingerprint() == engine.state_fingerprint()
        print(f"\nreloaded engine fingerprint matches: {same}")

        print("\nword list from the reloaded engine:")
        for line in export_wordlist(loaded).splitlines():
            print(f"  {line}")


if __name__ == "__main__":
    main()

"""A tiny labeling session, narrated: widen, retrain, review a hit list,
deepen, and read the provisional page text.

Run:  python3 demos/quickstart.py
"""

from wordharvest.corpus import CorpusSpec, generate_corpus, prepare_engine
from wordharvest.harvest import EngineConfig, LabelDraft
from wordharvest.store import export_transcription

NOW = 1_000_000.0

# desk-session scheduler: one label makes a book hot, retraining is due
# immediately (production defaults debounce for 5 s and want 10 recent
# labels before a book jumps the cold queue)
DESK = EngineConfig(hot_label_threshold=1, debounce_seconds=0.0)


def main():
    spec = CorpusSpec(classes=6, per_class=12, seed=11, word_len=(4, 5))
    corpus = generate_corpus(spec)
    engine, truth, test_set = prepare_engine(
        corpus, engine_config=DESK, test_per_class=3, seed=11
    )
    print(f"corpus: {len(corpus.labels)} words, {len(engine.zones)} zones, "
          f"{len(engine.pages)} pages, {len(test_set)} held-out instances")

    # widening: transcribe a few instances of three words
    targets = corpus.labels[:3]
    drafts = []
    for label in targets:
        zone_ids = [z for z, lab in sorted(truth.items()) if lab == label][:3]
        drafts.extend(
            LabelDraft(zone_id=z, label=label, action="new", mode="widening")
            for z in zone_ids
        )
    report = engine.submit_labels(drafts, batch_id="widen-1", now=NOW)
    print(f"\nwidening batch: {len(report.accepted_event_ids)} labels across "
          f"{len(targets)} new classes {targets}")

    cycle = engine.run_cycle(now=NOW + 10.0)
    for row in engine.classes_summary():
        print(f"  {row['label']:>8}  n={row['n_labels']}  regime={row['regime']}  "
              f"v{row['model_version']}  eur={row['eur'] and round(row['eur'], 3)}")

    # review the first class's hit list
    key = targets[0]
    state = engine.classes[key]
    print(f"\nhit list for '{key}' (model v{state.hitlist.model_version}):")
    fresh = []
    for e in state.hitlist.entries[:6]:
        mark = "labeled" if e.already_labeled else ("hit!" if truth.get(e.zone_id) == key else "miss")
        print(f"  {e.score:9.3f}  {e.zone_id:<28} {mark}")
        if not e.already_labeled and truth.get(e.zone_id) == key:
            fresh.append(e.zone_id)

    # deepening: confirm the true hits in one gesture
    confirms = [
        LabelDraft(zone_id=z, label=key, action="confirm", mode="deepening")
        for z in fresh
    ]
    if confirms:
        engine.submit_labels(confirms, batch_id="deepen-1", now=NOW + 60.0)
        engine.run_cycle(now=NOW + 70.0)
        state = engine.classes[key]
        print(f"\nconfirmed {len(confirms)} hits -> '{key}' retrained to "
              f"v{state.version} with n={state.n_labels}")

    # the models now read unlabeled zones
    feature, want = test_set[0]
    guesses = engine.classify_feature(feature, top_n=3)
    shown = ", ".join(f"{k} ({s:.2f})" for k, s in guesses)
    print(f"\nheld-out instance of '{want}' -> ranked guesses: {shown}")

    page_id = sorted(engine.pages)[0]
    print(f"\nprovisional transcription of {page_id} "
          f"(confirmed words, confident hypotheses, ... elsewhere):")
    for line in export_transcription(engine, page_id).splitlines():
        print(f"  | {line}")


if __name__ == "__main__":
    main()

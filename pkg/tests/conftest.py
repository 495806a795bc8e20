"""Shared fixtures: one small deterministic corpus reused across suites.

The corpus and its features are expensive (elastic morphing per instance,
k-means for the codebook), so they are session scoped; tests must not
mutate them. Engines are cheap and built fresh per test.
"""

import numpy as np
import pytest

from wordharvest.corpus import CorpusSpec, generate_corpus, prepare_engine
from wordharvest.harvest import EngineConfig, LabelDraft

SEED = 7


@pytest.fixture(scope="session")
def small_corpus():
    spec = CorpusSpec(
        classes=8,
        per_class=14,
        seed=SEED,
        word_len=(4, 5),
        amplitude=2.0,
        noise_p=0.04,
        styles=1,
        books=1,
    )
    return generate_corpus(spec)


@pytest.fixture()
def loaded_engine(small_corpus):
    """Fresh engine over the shared corpus, one test split held out."""
    engine, truth, test_set = prepare_engine(
        small_corpus,
        engine_config=EngineConfig(),
        test_per_class=3,
        seed=SEED,
    )
    return engine, truth, test_set


def seed_labels(engine, truth, per_class, batch_id="seed", now=1_000_000.0):
    """Label the first per_class zones of every class as one batch."""
    by_class = {}
    for zone_id in sorted(truth):
        by_class.setdefault(truth[zone_id], []).append(zone_id)
    drafts = [
        LabelDraft(zone_id=z, label=label, action="new", mode="widening")
        for label, zones in sorted(by_class.items())
        for z in zones[:per_class]
    ]
    return engine.submit_labels(drafts, batch_id=batch_id, now=now)


def random_mask(rng, lo=8, hi=40, p=0.35):
    h = int(rng.integers(lo, hi))
    w = int(rng.integers(lo, hi))
    return rng.random((h, w)) < p

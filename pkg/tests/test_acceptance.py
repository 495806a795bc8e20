"""Acceptance gate: the nine headline claims, one test and one printed
pass/fail line each, at the stated tolerances and runtime budgets.

Oracles are shared with the per-module suites (exhaustive seam paths,
threshold sweeps, brute-force re-scoring, scratch event-log refolds), so
every equivalence here is dual-route, never self-referential.
"""

import time

import numpy as np

from wordharvest import experiments
from wordharvest.ballpark import (
    CapacityQuery,
    REGIME_BOUNDS,
    Regime,
    capacity_estimate,
    select_ballpark,
)
from wordharvest.corpus import CorpusSpec, generate_corpus, prepare_engine
from wordharvest.features import kmeans
from wordharvest.harvest import (
    EngineConfig,
    LabelDraft,
    LabelEvent,
    peak_rate,
    replay_session,
    simulate_user,
)
from wordharvest.imaging import MorphParams, elastic_morph, otsu_threshold
from wordharvest.ranking import hit_score, rank_hitlist, uncertainty_curves
from wordharvest.segmentation import carve_seam

from conftest import random_mask
from test_harvest import drafts_for, manual_engine
from test_imaging import otsu_by_sweep
from test_ranking import REGIMES, brute_score, eur_by_sweep, fv, pos_sample, random_model
from test_segmentation import all_paths_min_cost, path_cost
from test_store import drive_session

SEED = 7


def report(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


class TestPrimaryCriteria:
    def test_c1_oracle_equivalence_suite(self, capsys):
        t0 = time.monotonic()
        rng = np.random.default_rng(SEED)

        # seam DP vs exhaustive path enumeration, exact on integer costs
        seam_cases = 0
        for _ in range(60):
            shape = (int(rng.integers(1, 7)), int(rng.integers(1, 7)))
            cost = rng.integers(0, 9, size=shape).astype(np.float64)
            path = carve_seam(cost)
            assert path_cost(cost, path) == all_paths_min_cost(cost)
            seam_cases += 1

        # EUR crossing vs a full threshold sweep
        eur_max_delta = 0.0
        for _ in range(120):
            model = random_model(rng, Regime.NEAREST_CENTROID, 1)
            xs = rng.normal(size=int(rng.integers(2, 25)))
            positives = [pos_sample([x], f"p{i}") for i, x in enumerate(xs)]
            residual = [
                hit_score(model, np.array([x]))
                for x in rng.normal(size=int(rng.integers(1, 40))) * 1.5
            ]
            curves = uncertainty_curves(model, positives, residual)
            want_eur, want_thr = eur_by_sweep(
                [hit_score(model, s.feature.histogram) for s in positives], residual
            )
            eur_max_delta = max(
                eur_max_delta,
                abs(curves.eur - want_eur),
                abs(curves.eur_threshold - want_thr),
            )
        assert eur_max_delta < 1e-9

        # 1NN / centroid / SVM hit-list ordering vs brute-force re-scoring
        for case in range(90):
            regime = REGIMES[case % 3]
            dim = int(rng.integers(1, 8))
            model = random_model(rng, regime, dim)
            pool = [
                fv(rng.normal(size=dim), f"z{i:03d}")
                for i in range(int(rng.integers(2, 25)))
            ]
            hitlist = rank_hitlist(model, pool, len(pool))
            expected = sorted((-brute_score(model, p.histogram), p.zone_id) for p in pool)
            assert [e.zone_id for e in hitlist.entries] == [z for _, z in expected]

        # Otsu vs trying all 256 thresholds
        for _ in range(100):
            img = rng.integers(0, 256, size=(12, 12)).astype(np.uint8)
            assert otsu_threshold(img) == otsu_by_sweep(img)

        elapsed = time.monotonic() - t0
        report(
            capsys,
            "oracle equivalence suite",
            elapsed < 10.0,
            f"seam exact x{seam_cases}, EUR max delta {eur_max_delta:.2e}, "
            f"ordering x90, otsu x100, {elapsed:.1f}s (< 10s)",
        )

    def test_c2_capacity_calculator(self, capsys):
        full = capacity_estimate(CapacityQuery(weights=100_000_000, dropout_p=0))
        dropped = capacity_estimate(CapacityQuery(weights=100_000_000, dropout_p=0.8))
        report(
            capsys,
            "capacity calculator",
            full == 500_000_000 and dropped == 100_000_000,
            f"(1e8, 0) -> {full}, (1e8, 0.8) -> {dropped}",
        )

    def test_c3_ballpark_regime_table(self, capsys):
        table = {
            0: Regime.ZERO_LABEL,
            1: Regime.ONE_NN,
            2: Regime.NEAREST_CENTROID,
            5: Regime.NEAREST_CENTROID,
            19: Regime.NEAREST_CENTROID,
            20: Regime.SVM,
            100: Regime.SVM,
            101: Regime.DEEP_ELIGIBLE,
        }
        points_ok = all(select_ballpark(n) is want for n, want in table.items())
        tiling_ok = True
        for n in range(1001):
            owners = [
                regime
                for regime, (lo, hi) in REGIME_BOUNDS.items()
                if lo <= n and (hi is None or n <= hi)
            ]
            if len(owners) != 1 or select_ballpark(n) is not owners[0]:
                tiling_ok = False
                break
        report(
            capsys,
            "ball-park regime table",
            points_ok and tiling_ok,
            "8 reference points exact, intervals tile 0..1000 with no gap or overlap",
        )

    def test_c4_label_density_trend(self, capsys):
        t0 = time.monotonic()
        result = experiments.perf_density()
        elapsed = time.monotonic() - t0
        acc = result.mean_accuracy
        gap = acc[100] - acc[5]
        asymptote = abs(acc[100] - acc[200])
        report(
            capsys,
            "label-density trend",
            gap >= 0.15 and asymptote < 0.05 and elapsed < 300.0,
            f"acc@5 {acc[5]:.3f}, acc@100 {acc[100]:.3f}, acc@200 {acc[200]:.3f}; "
            f"gap {gap * 100:.1f}pp (>= 15), asymptote {asymptote * 100:.1f}pp (< 5), "
            f"{elapsed:.0f}s (< 300s)",
        )

    def test_c5_misguided_precision(self, capsys):
        reference = experiments.split_class_reference(seed=SEED).report
        planted = experiments.split_class_planted(seed=SEED).report
        ok = (
            reference.lumped_accuracy > reference.split_accuracy
            and planted.split_accuracy > planted.lumped_accuracy
        )
        report(
            capsys,
            "misguided precision",
            ok,
            f"reference lumped {reference.lumped_accuracy:.3f} > split "
            f"{reference.split_accuracy:.3f}; planted split {planted.split_accuracy:.3f} "
            f"> lumped {planted.lumped_accuracy:.3f}",
        )

    def test_c6_labeling_effect(self, capsys):
        result = experiments.labeling_effect_reference(seed=SEED)
        delta = result.effect.delta_far_at_old_eur_threshold
        report(
            capsys,
            "labeling effect",
            result.n_after - result.n_before == 9 and delta < 0.0,
            f"+{result.n_after - result.n_before} confirmed positives, "
            f"delta_far {delta:+.4f} at the old EUR threshold (< 0)",
        )

    def test_c7_snowball(self, capsys):
        t0 = time.monotonic()

        def fresh():
            corpus = generate_corpus(CorpusSpec(classes=12, per_class=26, seed=SEED))
            return prepare_engine(corpus, seed=SEED)

        engine, truth, test_set = fresh()
        prospects = simulate_user(
            engine, truth, test_set, policy="prospects", interactions=40, seed=SEED
        )
        engine, truth, test_set = fresh()
        sequential = simulate_user(
            engine, truth, test_set, policy="sequential", interactions=40, seed=SEED
        )

        burst = [
            LabelEvent(
                event_id=i + 1,
                zone_id=f"z{i}",
                class_key="w",
                action="new",
                mode="deepening",
                user="u",
                batch_id="burst",
                timestamp=1000.0,
            )
            for i in range(30)
        ]
        peak = peak_rate(burst, window_seconds=60.0)
        elapsed = time.monotonic() - t0
        ok = (
            prospects.post_warmup_rate >= 5.0
            and sequential.labels_per_interaction == 1.0
            and peak >= 30.0
            and elapsed < 120.0
        )
        report(
            capsys,
            "snowball",
            ok,
            f"prospects {prospects.post_warmup_rate:.1f} labels/interaction post-warmup "
            f"(>= 5) vs sequential {sequential.labels_per_interaction:.2f} (== 1.0); "
            f"30-label batch -> {peak:.0f} labels/min (>= 30); {elapsed:.0f}s (< 120s)",
        )

    def test_c8_replay_determinism(self, capsys, small_corpus):
        engine, truth, _ = prepare_engine(
            small_corpus, engine_config=EngineConfig(), test_per_class=3, seed=SEED
        )
        drive_session(engine, truth)
        fresh, _, _ = prepare_engine(
            small_corpus, engine_config=EngineConfig(), test_per_class=3, seed=SEED
        )
        assert fresh.state_fingerprint() != engine.state_fingerprint()
        replay_session(fresh, engine.log.events, engine.cycle_journal)
        same = fresh.state_fingerprint() == engine.state_fingerprint()
        versions = {k: s.version for k, s in engine.classes.items()}
        report(
            capsys,
            "replay determinism",
            same,
            f"{len(engine.log.events)} events, {len(engine.cycle_journal)} cycles, "
            f"model versions {sorted(set(versions.values()))}: state fingerprints "
            f"byte-identical after replay from empty",
        )

    def test_c9_property_suites(self, capsys):
        rng = np.random.default_rng(SEED)
        counts = {}

        # argsort invariance of ranking under monotone score transforms
        n = 0
        for case in range(100):
            regime = REGIMES[case % 3]
            dim = int(rng.integers(1, 6))
            model = random_model(rng, regime, dim)
            pool = [
                fv(rng.uniform(-1, 1, size=dim), f"z{i:03d}")
                for i in range(int(rng.integers(2, 20)))
            ]
            order = [e.zone_id for e in rank_hitlist(model, pool, len(pool)).entries]
            scores = {p.zone_id: brute_score(model, p.histogram) for p in pool}
            for transform in (lambda s: 3.0 * s + 2.0, lambda s: s**3):
                expected = sorted(pool, key=lambda p: (-transform(scores[p.zone_id]), p.zone_id))
                assert [p.zone_id for p in expected] == order
            n += 1
        counts["argsort invariance"] = n

        # FRR non-decreasing, FAR non-increasing in the threshold
        n = 0
        for _ in range(100):
            model = random_model(rng, Regime.NEAREST_CENTROID, 1)
            positives = [
                pos_sample([x], f"p{i}")
                for i, x in enumerate(rng.normal(size=int(rng.integers(2, 25))))
            ]
            residual = [
                hit_score(model, np.array([x]))
                for x in rng.normal(size=int(rng.integers(1, 40)))
            ]
            curves = uncertainty_curves(model, positives, residual)
            assert (np.diff(curves.thresholds) > 0).all()
            assert (np.diff(curves.frr) >= 0).all()
            assert (np.diff(curves.far_presumed) <= 0).all()
            n += 1
        counts["frr/far monotonicity"] = n

        # Lloyd iterations never raise the objective
        n = 0
        for case in range(100):
            pts = rng.normal(size=(int(rng.integers(4, 40)), int(rng.integers(1, 6))))
            _, _, history = kmeans(pts, int(rng.integers(1, 6)), seed=case)
            assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
            n += 1
        counts["k-means inertia"] = n

        # elastic morphing at amplitude 0 is the identity
        n = 0
        for i in range(100):
            mask = random_mask(rng, lo=6, hi=30)
            out = elastic_morph(mask, MorphParams(amplitude=0.0, smoothness=3.0, seed=i))
            assert np.array_equal(out, mask)
            n += 1
        counts["morph identity"] = n

        # incremental event coalescing equals a from-scratch refold
        engine = manual_engine(hot_label_threshold=1, debounce_seconds=0.0)
        zones = sorted(engine.zones)
        now = 1_000_000.0
        n = 0
        for i in range(100):
            now += 10.0
            word = f"word{int(rng.integers(4))}"
            if rng.random() < 0.25 and engine.classes.get(word) and engine.classes[word].hitlist:
                entries = engine.classes[word].hitlist.entries
                pick = entries[int(rng.integers(len(entries)))].zone_id
                action = "confirm" if rng.random() < 0.5 else "reject"
                engine.submit_labels(
                    drafts_for([pick], word, action=action, mode="deepening"),
                    batch_id=f"acc-{i}",
                    now=now,
                )
            else:
                picks = rng.choice(len(zones), size=int(rng.integers(1, 4)), replace=False)
                engine.submit_labels(
                    drafts_for([zones[j] for j in picks], word),
                    batch_id=f"acc-{i}",
                    now=now,
                )
            if i % 10 == 9:
                engine.run_cycle(now=now + 1.0)
            self._assert_refold(engine)
            n += 1
        counts["event-log coalescing"] = n

        ok = all(v >= 100 for v in counts.values())
        report(
            capsys,
            "property suites",
            ok,
            "; ".join(f"{k} x{v}" for k, v in counts.items()),
        )

    @staticmethod
    def _assert_refold(engine):
        labels, samples, rejected = {}, {}, {}
        for ev in engine.log.events:
            samples.setdefault(ev.class_key, {})
            rejected.setdefault(ev.class_key, set())
            if ev.action in ("new", "confirm"):
                prev = labels.get(ev.zone_id)
                if prev is not None and prev[0] != ev.class_key:
                    samples[prev[0]].pop(ev.zone_id, None)
                labels[ev.zone_id] = (ev.class_key, ev.action)
                samples[ev.class_key][ev.zone_id] = ev.action
                rejected[ev.class_key].discard(ev.zone_id)
            else:
                prev = labels.get(ev.zone_id)
                if prev is not None and prev[0] == ev.class_key:
                    del labels[ev.zone_id]
                samples[ev.class_key].pop(ev.zone_id, None)
                rejected[ev.class_key].add(ev.zone_id)
        assert engine.labels == labels
        for key, state in engine.classes.items():
            assert state.samples == samples[key]
            assert state.rejected == rejected[key]

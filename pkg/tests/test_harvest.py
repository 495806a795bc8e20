"""Label intake, event-log durability, cycle scheduling, replay, metrics.

The coalescing check is dual-route: the engine materializes label state
incrementally per batch, while the oracle refolds the whole event log from
scratch after every batch; both must land on identical state.
"""

import json
import math

import numpy as np
import pytest

from wordharvest.errors import ConflictError, DomainError, ParameterError
from wordharvest.features import FeatureVector
from wordharvest.harvest import (
    Engine,
    EngineConfig,
    EventLog,
    LabelDraft,
    LabelEvent,
    harvest_curve,
    peak_rate,
    replay_session,
    simulate_user,
)
from wordharvest.segmentation import WordZone

from conftest import seed_labels


def make_event(event_id, zone_id="z0", class_key="word", action="new", ts=1000.0, batch="b0"):
    return LabelEvent(
        event_id=event_id,
        zone_id=zone_id,
        class_key=class_key,
        action=action,
        mode="widening",
        user="u",
        batch_id=batch,
        timestamp=ts,
    )


def manual_engine(n_zones=30, **config_overrides):
    """Engine over synthetic features, no images, one default book."""
    config = EngineConfig(**config_overrides)
    engine = Engine(config=config)
    rng = np.random.default_rng(0)
    for i in range(n_zones):
        zone = WordZone(
            zone_id=f"p0#0#{i}:0:5:5", page_id="p0", line_idx=0, x=i, y=0, w=5, h=5
        )
        feature = FeatureVector(zone_id=zone.zone_id, histogram=rng.random(4))
        engine.add_zone(zone, feature)
    return engine


def drafts_for(zone_ids, label, action="new", mode="widening"):
    return [
        LabelDraft(zone_id=z, label=label, action=action, mode=mode) for z in zone_ids
    ]


class TestEventLog:
    def _lines(self, events):
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in events)

    def test_append_persists_and_reloads(self, tmp_path):
        path = tmp_path / "events.jsonl"
        log = EventLog(path)
        log.append([make_event(1), make_event(2, zone_id="z1")])
        reloaded = EventLog(path)
        assert [e.event_id for e in reloaded.events] == [1, 2]
        assert reloaded.events[1].zone_id == "z1"
        assert reloaded.next_id == 3

    def test_torn_trailing_write_dropped_and_counted(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text(self._lines([make_event(1), make_event(2)]) + '{"event_id": 3, "zo')
        log = EventLog(path)
        assert [e.event_id for e in log.events] == [1, 2]
        assert log.dropped_partial == 1

    def test_corrupt_middle_line_rejected(self, tmp_path):
        path = tmp_path / "events.jsonl"
        good = self._lines([make_event(1)])
        path.write_text(good + "not json\n" + self._lines([make_event(3)]))
        with pytest.raises(DomainError):
            EventLog(path)

    def test_non_monotone_ids_rejected(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text(self._lines([make_event(2), make_event(1, zone_id="z1")]))
        with pytest.raises(DomainError):
            EventLog(path)

    def test_unknown_action_rejected(self):
        data = make_event(1).to_json()
        data["action"] = "maybe"
        with pytest.raises(DomainError):
            LabelEvent.from_json(data)
        data = make_event(1).to_json()
        data["mode"] = "sideways"
        with pytest.raises(DomainError):
            LabelEvent.from_json(data)

    def test_next_id_starts_at_one(self):
        assert EventLog().next_id == 1


class TestSubmitValidation:
    def test_unknown_zone_rejected_per_event(self):
        engine = manual_engine()
        report = engine.submit_labels(
            drafts_for(["p0#0#0:0:5:5", "nope"], "word"), batch_id="b", now=1000.0
        )
        assert len(report.accepted_event_ids) == 1
        assert report.rejected == [
            {"index": 1, "zone_id": "nope", "reason": "unknown zone_id"}
        ]

    def test_empty_label_rejected(self):
        engine = manual_engine()
        report = engine.submit_labels(
            drafts_for(["p0#0#0:0:5:5"], "   "), batch_id="b", now=1000.0
        )
        assert report.rejected[0]["reason"] == "empty label"

    def test_bad_action_and_mode_rejected(self):
        engine = manual_engine()
        bad_action = [
            LabelDraft(zone_id="p0#0#0:0:5:5", label="w", action="guess", mode="widening")
        ]
        report = engine.submit_labels(bad_action, batch_id="b1", now=1000.0)
        assert "unknown action" in report.rejected[0]["reason"]
        bad_mode = [
            LabelDraft(zone_id="p0#0#0:0:5:5", label="w", action="new", mode="upward")
        ]
        report = engine.submit_labels(bad_mode, batch_id="b2", now=1000.0)
        assert "unknown mode" in report.rejected[0]["reason"]

    def test_confirm_requires_a_hitlist(self):
        engine = manual_engine()
        report = engine.submit_labels(
            drafts_for(["p0#0#0:0:5:5"], "word", action="confirm"),
            batch_id="b",
            now=1000.0,
        )
        assert report.rejected[0]["reason"] == "no hit list for class"

    def test_confirm_requires_hitlist_membership(self):
        engine = manual_engine(
            hot_label_threshold=1, debounce_seconds=0.0, hitlist_limit=5
        )
        zones = sorted(engine.zones)
        engine.submit_labels(drafts_for(zones[:2], "word"), batch_id="b0", now=1000.0)
        engine.run_cycle(now=1001.0)
        listed = {e.zone_id for e in engine.classes["word"].hitlist.entries}
        outside = next(z for z in zones if z not in listed)
        report = engine.submit_labels(
            drafts_for([outside], "word", action="confirm"), batch_id="b1", now=1002.0
        )
        assert report.rejected[0]["reason"] == "zone not in current hit list"

    def test_duplicate_zone_in_batch_rejected(self):
        engine = manual_engine()
        z = "p0#0#0:0:5:5"
        report = engine.submit_labels(
            drafts_for([z, z], "word"), batch_id="b", now=1000.0
        )
        assert len(report.accepted_event_ids) == 1
        assert report.rejected[0]["reason"] == "duplicate in batch"

    def test_conflicting_actions_abort_the_batch(self):
        engine = manual_engine()
        z = "p0#0#0:0:5:5"
        drafts = [
            LabelDraft(zone_id=z, label="worda", action="new", mode="widening"),
            LabelDraft(zone_id=z, label="wordb", action="new", mode="widening"),
        ]
        with pytest.raises(ConflictError):
            engine.submit_labels(drafts, batch_id="b", now=1000.0)
        assert engine.log.events == []

    def test_duplicate_batch_id_returns_original_report(self):
        engine = manual_engine()
        zones = sorted(engine.zones)[:3]
        first = engine.submit_labels(drafts_for(zones, "word"), batch_id="b", now=1000.0)
        again = engine.submit_labels(drafts_for(zones, "other"), batch_id="b", now=2000.0)
        assert again.duplicate and not first.duplicate
        assert again.accepted_event_ids == first.accepted_event_ids
        assert len(engine.log.events) == 3  # nothing appended twice


class TestMaterialization:
    def test_reassignment_moves_the_zone(self):
        engine = manual_engine()
        z = sorted(engine.zones)[0]
        engine.submit_labels(drafts_for([z], "worda"), batch_id="b0", now=1000.0)
        report = engine.submit_labels(drafts_for([z], "wordb"), batch_id="b1", now=1001.0)
        assert engine.labels[z] == ("wordb", "new")
        assert z not in engine.classes["worda"].samples
        assert z in engine.classes["wordb"].samples
        # worda was already pending from the first batch, so only wordb is new
        assert report.enqueued_classes == ["wordb"]
        assert set(engine.pending) == {"worda", "wordb"}

    def test_reject_clears_and_records(self):
        engine = manual_engine(hot_label_threshold=1, debounce_seconds=0.0)
        zones = sorted(engine.zones)
        engine.submit_labels(drafts_for(zones[:2], "word"), batch_id="b0", now=1000.0)
        engine.run_cycle(now=1001.0)
        target = engine.classes["word"].hitlist.entries[0].zone_id
        engine.submit_labels(
            drafts_for([target], "word", action="reject", mode="deepening"),
            batch_id="b1",
            now=1002.0,
        )
        assert target not in engine.labels
        assert target in engine.classes["word"].rejected
        assert target not in engine.classes["word"].samples
        # relabeling afterwards clears the rejection
        engine.submit_labels(drafts_for([target], "word"), batch_id="b2", now=1003.0)
        assert target not in engine.classes["word"].rejected
        assert engine.labels[target] == ("word", "new")

    def test_incremental_state_matches_full_refold(self, loaded_engine):
        """120 random batches; engine state vs scratch refold after each."""
        engine, truth, _ = loaded_engine
        labels = sorted(set(truth.values()))
        zone_ids = sorted(truth)
        rng = np.random.default_rng(7)
        now = 1_000_000.0
        for i in range(120):
            now += 30.0
            drafts = []
            if rng.random() < 0.3 and engine.classes:
                # review gesture against a live hit list when one exists
                keyed = [
                    s for s in engine.classes.values() if s.hitlist is not None
                ]
                if keyed:
                    state = keyed[int(rng.integers(len(keyed)))]
                    entries = list(state.hitlist.entries)
                    picks = rng.choice(
                        len(entries), size=min(3, len(entries)), replace=False
                    )
                    for j in picks:
                        action = "confirm" if rng.random() < 0.6 else "reject"
                        drafts.append(
                            LabelDraft(
                                zone_id=entries[j].zone_id,
                                label=state.class_key,
                                action=action,
                                mode="deepening",
                            )
                        )
            if not drafts:
                n = int(rng.integers(1, 7))
                picks = rng.choice(len(zone_ids), size=n, replace=False)
                for j in picks:
                    z = zone_ids[j]
                    label = (
                        truth[z]
                        if rng.random() < 0.8
                        else labels[int(rng.integers(len(labels)))]
                    )
                    drafts.append(
                        LabelDraft(zone_id=z, label=label, action="new", mode="widening")
                    )
            engine.submit_labels(drafts, batch_id=f"fold-{i:04d}", now=now)
            if i % 7 == 6:
                engine.run_cycle(now=now + engine.config.debounce_seconds + 1.0)
            self._assert_matches_refold(engine)

    @staticmethod
    def _assert_matches_refold(engine):
        labels = {}
        samples = {}
        rejected = {}
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
        assert set(engine.classes) == set(samples)
        for key, state in engine.classes.items():
            assert state.samples == samples[key], key
            assert state.rejected == rejected[key], key


class TestScheduling:
    def test_debounce_delays_processing(self):
        engine = manual_engine(hot_label_threshold=1, debounce_seconds=5.0)
        zones = sorted(engine.zones)[:2]
        engine.submit_labels(drafts_for(zones, "word"), batch_id="b", now=1000.0)
        early = engine.run_cycle(now=1002.0)
        assert early.classes_retrained == [] and "word" in engine.pending
        late = engine.run_cycle(now=1006.0)
        assert late.classes_retrained == ["word"]
        assert "word" not in engine.pending

    def test_book_heat_threshold_and_window(self):
        engine = manual_engine(hot_label_threshold=10)
        zones = sorted(engine.zones)
        engine.submit_labels(drafts_for(zones[:9], "word"), batch_id="b0", now=1000.0)
        assert engine.book_heat(1000.0)["book-0"].status == "cold"
        engine.submit_labels(drafts_for(zones[9:10], "word"), batch_id="b1", now=1000.0)
        heat = engine.book_heat(1000.0)
        assert heat["book-0"].status == "hot"
        assert heat["book-0"].recent_labels == 10
        window = engine.config.hot_window_seconds
        assert engine.book_heat(1000.0 + window - 1.0)["book-0"].status == "hot"
        # at exactly now - window the labels fall off the closed boundary
        assert engine.book_heat(1000.0 + window)["book-0"].status == "cold"

    def test_cold_book_processed_every_kth_cycle(self):
        engine = manual_engine(hot_label_threshold=10, debounce_seconds=0.0, cold_every_k=10)
        zones = sorted(engine.zones)[:2]
        engine.submit_labels(drafts_for(zones, "word"), batch_id="b", now=1000.0)
        for cycle in range(1, 10):
            report = engine.run_cycle(now=1000.0 + cycle)
            assert report.skipped_cold == ["word"], f"cycle {cycle}"
        report = engine.run_cycle(now=1010.0)
        assert report.classes_retrained == ["word"]
        assert report.skipped_cold == []

    def test_first_cycle_orders_by_class_key(self, loaded_engine):
        engine, truth, _ = loaded_engine
        seed_labels(engine, truth, per_class=2)
        report = engine.run_cycle(now=1_000_000.0 + 10.0)
        assert report.classes_retrained == sorted(report.classes_retrained)
        assert report.hitlists_regenerated == len(report.classes_retrained) == 8

    def test_failed_retrain_is_redebounced(self):
        engine = manual_engine(hot_label_threshold=1, debounce_seconds=5.0)
        zones = sorted(engine.zones)
        # 20 labels in one class, no other class: Svm has no negative pool
        engine.submit_labels(drafts_for(zones[:20], "word"), batch_id="b0", now=1000.0)
        report = engine.run_cycle(now=1006.0)
        assert report.classes_retrained == []
        assert report.failures[0]["class_key"] == "word"
        assert "negative" in report.failures[0]["error"]
        assert engine.pending["word"].debounce_deadline == 1006.0 + 10.0
        # a second class supplies negatives; the retry then succeeds
        engine.submit_labels(drafts_for(zones[20:22], "other"), batch_id="b1", now=1020.0)
        report = engine.run_cycle(now=1030.0)
        assert set(report.classes_retrained) == {"other", "word"}
        assert not engine.pending

    def test_label_velocity_window(self):
        engine = manual_engine(hot_label_threshold=1, debounce_seconds=0.0)
        zones = sorted(engine.zones)
        engine.submit_labels(drafts_for(zones[:3], "word"), batch_id="b", now=1000.0)
        assert engine.label_velocity("word", 1000.0) == 3.0
        assert engine.label_velocity("word", 1000.0 + 86400.0) == 0.0
        assert engine.label_velocity("other", 1000.0) == 0.0

    def test_cycle_journal_records_watermark(self):
        engine = manual_engine(hot_label_threshold=1, debounce_seconds=0.0)
        zones = sorted(engine.zones)[:2]
        engine.submit_labels(drafts_for(zones, "word"), batch_id="b", now=1000.0)
        engine.run_cycle(now=1001.0)
        assert engine.cycle_journal == [
            {"cycle_index": 1, "now": 1001.0, "after_event_id": 2}
        ]


class TestModelLifecycle:
    def test_versions_advance_per_retrain(self, loaded_engine):
        engine, truth, _ = loaded_engine
        seed_labels(engine, truth, per_class=2, batch_id="s0")
        engine.run_cycle(now=1_000_000.0 + 10.0)
        first = {k: s.version for k, s in engine.classes.items()}
        assert all(v == 1 for v in first.values())
        seed_labels(engine, truth, per_class=4, batch_id="s1", now=1_000_100.0)
        engine.run_cycle(now=1_000_200.0)
        assert all(s.version == 2 for s in engine.classes.values())
        for state in engine.classes.values():
            assert state.model.version == 2
            assert state.hitlist.model_version == 2

    def test_hitlist_regenerated_with_flags(self, loaded_engine):
        engine, truth, _ = loaded_engine
        seed_labels(engine, truth, per_class=3)
        engine.run_cycle(now=1_000_000.0 + 10.0)
        for state in engine.classes.values():
            listed = {e.zone_id for e in state.hitlist.entries}
            for zone_id in state.samples:
                if zone_id in listed:
                    entry = next(
                        e for e in state.hitlist.entries if e.zone_id == zone_id
                    )
                    assert entry.already_labeled
            assert not listed & state.rejected

    def test_classify_feature_and_summary(self, loaded_engine):
        engine, truth, test_set = loaded_engine
        assert engine.classify_feature(test_set[0][0]) == []
        seed_labels(engine, truth, per_class=4)
        engine.run_cycle(now=1_000_000.0 + 10.0)
        ranked = engine.classify_feature(test_set[0][0], top_n=3)
        assert len(ranked) == 3
        summary = engine.classes_summary()
        assert len(summary) == 8
        for row in summary:
            assert row["n_labels"] == 4
            assert row["regime"] == "NearestCentroid"
            assert row["model_version"] == 1


class TestReplay:
    def _drive_session(self, engine, truth):
        now = 1_000_000.0
        seed_labels(engine, truth, per_class=2, batch_id="r0", now=now)
        engine.run_cycle(now=now + 10.0)
        seed_labels(engine, truth, per_class=5, batch_id="r1", now=now + 100.0)
        engine.run_cycle(now=now + 200.0)
        # one review batch against a live hit list
        state = next(s for s in engine.classes.values() if s.hitlist is not None)
        fresh = [e for e in state.hitlist.entries if not e.already_labeled][:4]
        drafts = []
        for e in fresh[:2]:
            drafts.append(
                LabelDraft(
                    zone_id=e.zone_id,
                    label=state.class_key,
                    action="confirm",
                    mode="deepening",
                )
            )
        for e in fresh[2:]:
            drafts.append(
                LabelDraft(
                    zone_id=e.zone_id,
                    label=state.class_key,
                    action="reject",
                    mode="deepening",
                )
            )
        engine.submit_labels(drafts, batch_id="r2", now=now + 300.0)
        engine.run_cycle(now=now + 400.0)
        return engine

    def test_replay_rebuilds_identical_state(self, small_corpus):
        from wordharvest.corpus import prepare_engine

        engine, truth, _ = prepare_engine(
            small_corpus, engine_config=EngineConfig(), test_per_class=3, seed=7
        )
        self._drive_session(engine, truth)
        fresh, _, _ = prepare_engine(
            small_corpus, engine_config=EngineConfig(), test_per_class=3, seed=7
        )
        assert fresh.state_fingerprint() != engine.state_fingerprint()
        replay_session(fresh, engine.log.events, engine.cycle_journal)
        assert fresh.state_fingerprint() == engine.state_fingerprint()

    def test_replay_requires_empty_target(self, loaded_engine):
        engine, truth, _ = loaded_engine
        seed_labels(engine, truth, per_class=2)
        with pytest.raises(DomainError):
            replay_session(engine, engine.log.events, [])

    def test_fingerprint_sensitive_to_one_label(self, loaded_engine):
        engine, truth, _ = loaded_engine
        seed_labels(engine, truth, per_class=2, batch_id="f0")
        before = engine.state_fingerprint()
        zone = next(z for z in sorted(truth) if z not in engine.labels)
        engine.submit_labels(
            drafts_for([zone], truth[zone]), batch_id="f1", now=1_000_500.0
        )
        assert engine.state_fingerprint() != before


def curve_by_scan(times, bucket):
    lo = math.floor(min(times) / bucket) * bucket
    hi = math.floor(max(times) / bucket) * bucket
    points = []
    edge = lo
    while edge <= hi + 1e-9:
        points.append((edge + bucket, sum(1 for t in times if t < edge + bucket)))
        edge += bucket
    return points


class TestHarvestCurve:
    def test_matches_bucket_scan(self):
        """Vectorized bucketing equals the plain scan, 100 random logs."""
        rng = np.random.default_rng(11)
        for case in range(100):
            n = int(rng.integers(1, 40))
            times = 1_000_000.0 + np.round(rng.uniform(0, 3000, size=n), 3)
            bucket = float(rng.choice([7.5, 30.0, 60.0, 300.0]))
            events = [
                make_event(i + 1, zone_id=f"z{i}", ts=float(t), batch=f"b{i}")
                for i, t in enumerate(sorted(times))
            ]
            points = harvest_curve(events, bucket_seconds=bucket)
            expected = curve_by_scan([float(t) for t in times], bucket)
            assert len(points) == len(expected), f"case {case}"
            for p, (ts, n_cum) in zip(points, expected):
                assert abs(p.timestamp - ts) < 1e-6
                assert p.cumulative_labels == n_cum
                assert p.book_id == "*"
            assert points[-1].cumulative_labels == n

    def test_rejects_excluded(self):
        events = [
            make_event(1, ts=1000.0),
            make_event(2, zone_id="z1", action="reject", ts=1010.0),
            make_event(3, zone_id="z2", action="confirm", ts=1020.0),
        ]
        points = harvest_curve(events, bucket_seconds=60.0)
        assert points[-1].cumulative_labels == 2

    def test_book_filter(self):
        books = {"z0": "book-a", "z1": "book-b"}
        events = [make_event(1, zone_id="z0"), make_event(2, zone_id="z1", ts=1001.0)]
        points = harvest_curve(
            events, book_of=books.__getitem__, book_id="book-a", bucket_seconds=60.0
        )
        assert points[-1].cumulative_labels == 1
        assert points[-1].book_id == "book-a"

    def test_empty_and_invalid(self):
        assert harvest_curve([], bucket_seconds=60.0) == []
        with pytest.raises(ParameterError):
            harvest_curve([make_event(1)], bucket_seconds=0.0)
        with pytest.raises(ParameterError):
            harvest_curve([make_event(1)], book_id="book-a")


class TestPeakRate:
    def test_matches_window_scan(self):
        """Sliding two-pointer peak equals the quadratic scan, 100 cases."""
        rng = np.random.default_rng(12)
        for case in range(100):
            n = int(rng.integers(1, 50))
            times = np.round(rng.uniform(0, 600, size=n), 2)
            window = float(rng.choice([10.0, 60.0, 120.0]))
            events = [
                make_event(i + 1, zone_id=f"z{i}", ts=float(t))
                for i, t in enumerate(sorted(times))
            ]
            best = 0
            for t in times:
                best = max(best, sum(1 for u in times if t - window <= u <= t))
            assert peak_rate(events, window) == best * 60.0 / window, f"case {case}"

    def test_burst_of_thirty_in_one_minute(self):
        events = [
            make_event(i + 1, zone_id=f"z{i}", ts=1000.0 + i) for i in range(30)
        ]
        assert peak_rate(events, window_seconds=60.0) >= 30.0

    def test_rejects_and_empty(self):
        assert peak_rate([]) == 0.0
        only_rejects = [make_event(1, action="reject")]
        assert peak_rate(only_rejects) == 0.0


class TestSimulateUser:
    def test_sequential_policy_is_exactly_one_per_interaction(self, loaded_engine):
        engine, truth, test_set = loaded_engine
        report = simulate_user(
            engine, truth, test_set, policy="sequential", interactions=12, seed=7
        )
        assert report.labels_per_interaction == 1.0
        assert report.labels == 12
        assert report.interactions_run == 12
        assert report.warmup_interactions == 0
        assert len(report.accuracy_trace) == 12
        assert not report.exhausted

    def test_exhaustion_flagged(self, loaded_engine):
        engine, truth, test_set = loaded_engine
        report = simulate_user(
            engine, truth, test_set, policy="sequential", interactions=100, seed=7
        )
        assert report.exhausted
        assert report.labels == len(truth)

    def test_unknown_policy_rejected(self, loaded_engine):
        engine, truth, test_set = loaded_engine
        with pytest.raises(ParameterError):
            simulate_user(engine, truth, test_set, policy="random", interactions=1, seed=7)

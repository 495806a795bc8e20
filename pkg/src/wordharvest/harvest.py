"""Label-event intake, recompute scheduling, and harvest accounting.

The closed loop: labels arrive in batches, coalesce into per-class
recompute requests, a cycle retrains due classes (hot books first) and
regenerates their hit lists, which draw the next round of labels. The
event log is append-only; all label state is materialized by replay, and
a sidecar cycle journal records when cycles ran so model versions are
reproducible too.
"""

from __future__ import annotations

import json
import hashlib
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .ballpark import (
    ClassModel,
    Regime,
    Sample,
    TrainConfig,
    classify,
    normalize_label,
    train_class,
)
from .errors import ConflictError, DomainError, ParameterError
from .features import Codebook, FeatureVector, PatchConfig
from .ranking import (
    HitList,
    Prospect,
    UncertaintyCurves,
    hit_score,
    near_boundary_count,
    prospect_score,
    rank_hitlist,
    uncertainty_curves,
)
from .segmentation import LineBand, WordZone

__all__ = [
    "LabelEvent",
    "LabelDraft",
    "RecomputeRequest",
    "BookHeat",
    "HarvestPoint",
    "EventLog",
    "EngineConfig",
    "Engine",
    "SubmitReport",
    "CycleReport",
    "harvest_curve",
    "peak_rate",
    "replay_session",
    "SessionReport",
    "simulate_user",
]

ACTIONS = ("new", "confirm", "reject")
MODES = ("widening", "deepening")


@dataclass(frozen=True)
class LabelEvent:
    event_id: int
    zone_id: str
    class_key: str
    action: str
    mode: str
    user: str
    batch_id: str
    timestamp: float

    def to_json(self) -> dict:
        return {
            "event_id": self.event_id,
            "zone_id": self.zone_id,
            "class_key": self.class_key,
            "action": self.action,
            "mode": self.mode,
            "user": self.user,
            "batch_id": self.batch_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: dict) -> "LabelEvent":
        if data["action"] not in ACTIONS:
            raise DomainError(f"unknown action {data['action']!r}")
        if data["mode"] not in MODES:
            raise DomainError(f"unknown mode {data['mode']!r}")
        return cls(
            event_id=int(data["event_id"]),
            zone_id=data["zone_id"],
            class_key=data["class_key"],
            action=data["action"],
            mode=data["mode"],
            user=data["user"],
            batch_id=data["batch_id"],
            timestamp=float(data["timestamp"]),
        )


@dataclass(frozen=True)
class LabelDraft:
    """An unvalidated label submission, before ids are assigned."""

    zone_id: str
    label: str
    action: str
    mode: str
    user: str = "anon"


@dataclass
class RecomputeRequest:
    class_key: str
    reason: str  # new_label | rejection | policy
    enqueued_at: float
    debounce_deadline: float


@dataclass(frozen=True)
class BookHeat:
    book_id: str
    recent_labels: int
    status: str  # hot | cold


@dataclass(frozen=True)
class HarvestPoint:
    timestamp: float
    cumulative_labels: int
    book_id: str


class EventLog:
    """Append-only JSONL label log; the single source of label truth."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[LabelEvent] = []
        self.dropped_partial = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        raw = self.path.read_text(encoding="utf-8")
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        for i, line in enumerate(lines):
            try:
                self.events.append(LabelEvent.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError):
                if i == len(lines) - 1:
                    # torn trailing write: drop and report, keep the rest
                    self.dropped_partial += 1
                else:
                    raise DomainError(f"corrupt event log at line {i + 1}")
        last = 0
        for ev in self.events:
            if ev.event_id <= last:
                raise DomainError("event ids must be strictly increasing")
            last = ev.event_id

    @property
    def next_id(self) -> int:
        return (self.events[-1].event_id + 1) if self.events else 1

    def append(self, events: Sequence[LabelEvent]) -> None:
        self.events.extend(events)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                for ev in events:
                    fh.write(json.dumps(ev.to_json(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())


@dataclass
class EngineConfig:
    debounce_seconds: float = 5.0
    hot_label_threshold: int = 10  # L: labels within the window to run hot
    hot_window_seconds: float = 7 * 86400.0  # W
    cold_every_k: int = 10  # cold books are processed every Kth cycle
    hitlist_limit: int = 50
    residual_factor: int = 10  # residual pool = factor x hitlist_limit
    velocity_cap: float = 10.0
    velocity_window_seconds: float = 86400.0
    default_book: str = "book-0"
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class PageRecord:
    page_id: str
    book_id: str
    image: np.ndarray | None = None
    lines: list[LineBand] = field(default_factory=list)


@dataclass
class ZoneRecord:
    zone: WordZone
    feature: FeatureVector
    image: np.ndarray | None = None


@dataclass
class ClassState:
    class_key: str
    label: str
    samples: dict[str, str] = field(default_factory=dict)  # zone_id -> action
    rejected: set[str] = field(default_factory=set)
    version: int = 0
    model: ClassModel | None = None
    curves: UncertaintyCurves | None = None
    hitlist: HitList | None = None

    @property
    def n_labels(self) -> int:
        return len(self.samples)


@dataclass
class SubmitReport:
    batch_id: str
    accepted_event_ids: list[int]
    rejected: list[dict]
    enqueued_classes: list[str]
    duplicate: bool = False

    def to_json(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "accepted": len(self.accepted_event_ids),
            "accepted_event_ids": self.accepted_event_ids,
            "rejected": self.rejected,
            "enqueued_classes": self.enqueued_classes,
            "duplicate": self.duplicate,
        }


@dataclass
class CycleReport:
    cycle_index: int
    classes_retrained: list[str]
    hitlists_regenerated: int
    skipped_cold: list[str]
    failures: list[dict]
    durations: dict[str, float]

    def to_json(self) -> dict:
        return {
            "cycle_index": self.cycle_index,
            "classes_retrained": self.classes_retrained,
            "hitlists_regenerated": self.hitlists_regenerated,
            "skipped_cold": self.skipped_cold,
            "failures": self.failures,
            "durations": self.durations,
        }


class Engine:
    """Single-writer label intake plus the retrain/re-rank cycle."""

    def __init__(
        self,
        config: EngineConfig | None = None,
        log_path: str | Path | None = None,
        cycle_journal_path: str | Path | None = None,
    ):
        self.config = config or EngineConfig()
        self.log = EventLog(log_path)
        self.cycle_journal_path = (
            Path(cycle_journal_path) if cycle_journal_path is not None else None
        )
        self.pages: dict[str, PageRecord] = {}
        self.zones: dict[str, ZoneRecord] = {}
        self.labels: dict[str, tuple[str, str]] = {}  # zone_id -> (class_key, action)
        self.classes: dict[str, ClassState] = {}
        self.pending: dict[str, RecomputeRequest] = {}
        self.cycle_count = 0
        self.cycle_journal: list[dict] = []
        self.codebook: Codebook | None = None
        self.patch_config: PatchConfig = self.config.train.patch_config
        self._batch_reports: dict[str, SubmitReport] = {}
        self._feature_stack: np.ndarray | None = None
        if self.log.events:
            self._materialize_events(self.log.events)

    # ------------------------------------------------------------------
    # registration

    def set_codebook(self, codebook: Codebook, patch_config: PatchConfig) -> None:
        self.codebook = codebook
        self.patch_config = patch_config

    def add_page(
        self,
        page_id: str,
        book_id: str | None = None,
        image: np.ndarray | None = None,
        lines: Sequence[LineBand] | None = None,
    ) -> None:
        self.pages[page_id] = PageRecord(
            page_id=page_id,
            book_id=book_id or self.config.default_book,
            image=image,
            lines=list(lines) if lines else [],
        )

    def add_zone(
        self,
        zone: WordZone,
        feature: FeatureVector,
        image: np.ndarray | None = None,
    ) -> None:
        if zone.page_id not in self.pages:
            self.add_page(zone.page_id)
        self.zones[zone.zone_id] = ZoneRecord(zone=zone, feature=feature, image=image)
        self._feature_stack = None

    def book_of(self, zone_id: str) -> str:
        page_id = self.zones[zone_id].zone.page_id
        return self.pages[page_id].book_id

    def zone_image(self, zone_id: str) -> np.ndarray | None:
        rec = self.zones.get(zone_id)
        return rec.image if rec is not None else None

    # ------------------------------------------------------------------
    # label intake

    def _validate_draft(self, draft: LabelDraft) -> tuple[str, str] | None:
        """Returns (class_key, reason) where reason is None when accepted."""
        if draft.zone_id not in self.zones:
            return None, "unknown zone_id"
        if draft.action not in ACTIONS:
            return None, f"unknown action {draft.action!r}"
        if draft.mode not in MODES:
            return None, f"unknown mode {draft.mode!r}"
        key = normalize_label(draft.label)
        if not key:
            return None, "empty label"
        if draft.action in ("confirm", "reject"):
            state = self.classes.get(key)
            if state is None or state.hitlist is None:
                return key, "no hit list for class"
            if not any(e.zone_id == draft.zone_id for e in state.hitlist.entries):
                return key, "zone not in current hit list"
        return key, None

    def submit_labels(
        self,
        drafts: Sequence[LabelDraft],
        batch_id: str,
        now: float | None = None,
    ) -> SubmitReport:
        """Validate, append, materialize, and enqueue recomputes for a batch.

        Unknown zones are rejected per event without aborting the batch;
        contradictory actions for one zone abort the whole batch. A batch_id
        seen before returns the original report and appends nothing.
        """
        if batch_id in self._batch_reports:
            report = self._batch_reports[batch_id]
            return replace(report, duplicate=True)
        now = time.time() if now is None else now

        seen: dict[str, tuple[str, str]] = {}
        for d in drafts:
            key = normalize_label(d.label)
            prev = seen.get(d.zone_id)
            if prev is not None and prev != (d.action, key):
                raise ConflictError(f"conflicting actions for zone {d.zone_id}")
            seen[d.zone_id] = (d.action, key)

        accepted: list[LabelEvent] = []
        rejected: list[dict] = []
        dup_guard: set[str] = set()
        next_id = self.log.next_id
        for idx, d in enumerate(drafts):
            key, reason = self._validate_draft(d)
            if reason is None and d.zone_id in dup_guard:
                reason = "duplicate in batch"
            if reason is not None:
                rejected.append({"index": idx, "zone_id": d.zone_id, "reason": reason})
                continue
            dup_guard.add(d.zone_id)
            accepted.append(
                LabelEvent(
                    event_id=next_id + len(accepted),
                    zone_id=d.zone_id,
                    class_key=key,
                    action=d.action,
                    mode=d.mode,
                    user=d.user,
                    batch_id=batch_id,
                    timestamp=now,
                )
            )

        self.log.append(accepted)
        touched = self._materialize_events(accepted)
        enqueued = []
        for key in sorted(touched):
            reason = touched[key]
            if key not in self.pending:
                self.pending[key] = RecomputeRequest(
                    class_key=key,
                    reason=reason,
                    enqueued_at=now,
                    debounce_deadline=now + self.config.debounce_seconds,
                )
                enqueued.append(key)
        report = SubmitReport(
            batch_id=batch_id,
            accepted_event_ids=[e.event_id for e in accepted],
            rejected=rejected,
            enqueued_classes=enqueued,
        )
        self._batch_reports[batch_id] = report
        return report

    def _materialize_events(self, events: Iterable[LabelEvent]) -> dict[str, str]:
        """Apply events to label state; returns {class_key: recompute reason}."""
        touched: dict[str, str] = {}
        for ev in events:
            state = self.classes.get(ev.class_key)
            if state is None:
                state = ClassState(class_key=ev.class_key, label=ev.class_key)
                self.classes[ev.class_key] = state
            if ev.action in ("new", "confirm"):
                prev = self.labels.get(ev.zone_id)
                if prev is not None and prev[0] != ev.class_key:
                    self.classes[prev[0]].samples.pop(ev.zone_id, None)
                    touched[prev[0]] = "new_label"
                self.labels[ev.zone_id] = (ev.class_key, ev.action)
                state.samples[ev.zone_id] = ev.action
                state.rejected.discard(ev.zone_id)
                touched[ev.class_key] = "new_label"
            else:  # reject
                prev = self.labels.get(ev.zone_id)
                if prev is not None and prev[0] == ev.class_key:
                    del self.labels[ev.zone_id]
                state.samples.pop(ev.zone_id, None)
                state.rejected.add(ev.zone_id)
                touched.setdefault(ev.class_key, "rejection")
        return touched

    # ------------------------------------------------------------------
    # scheduling and the cycle

    def book_heat(self, now: float) -> dict[str, BookHeat]:
        lo = now - self.config.hot_window_seconds
        counts: dict[str, int] = {p.book_id: 0 for p in self.pages.values()}
        for ev in self.log.events:
            if ev.action == "reject" or not (lo < ev.timestamp <= now):
                continue
            if ev.zone_id in self.zones:
                counts[self.book_of(ev.zone_id)] = counts.get(self.book_of(ev.zone_id), 0) + 1
        return {
            b: BookHeat(
                book_id=b,
                recent_labels=c,
                status="hot" if c >= self.config.hot_label_threshold else "cold",
            )
            for b, c in counts.items()
        }

    def _class_book(self, state: ClassState) -> str:
        votes: dict[str, int] = {}
        for zone_id in state.samples:
            if zone_id in self.zones:
                b = self.book_of(zone_id)
                votes[b] = votes.get(b, 0) + 1
        if not votes:
            return self.config.default_book
        best = max(votes.values())
        return sorted(b for b, v in votes.items() if v == best)[0]

    def label_velocity(self, class_key: str, now: float) -> float:
        lo = now - self.config.velocity_window_seconds
        n = sum(
            1
            for ev in self.log.events
            if ev.class_key == class_key
            and ev.action != "reject"
            and lo < ev.timestamp <= now
        )
        return n * 86400.0 / self.config.velocity_window_seconds

    def _train_config(self) -> TrainConfig:
        pool_var = None
        stack = self._all_features()
        if stack is not None and stack.shape[0] >= 2:
            pool_var = stack.var(axis=0)
        return replace(
            self.config.train,
            image_provider=self.zone_image,
            codebook=self.codebook,
            patch_config=self.patch_config,
            pool_variance=pool_var,
        )

    def _all_features(self) -> np.ndarray | None:
        if not self.zones:
            return None
        if self._feature_stack is None:
            self._feature_stack = np.stack(
                [self.zones[z].feature.histogram for z in sorted(self.zones)]
            )
        return self._feature_stack

    def _samples_of(self, state: ClassState) -> list[Sample]:
        out = []
        for zone_id in sorted(state.samples):
            action = state.samples[zone_id]
            out.append(
                Sample(
                    zone_id=zone_id,
                    feature=self.zones[zone_id].feature,
                    class_key=state.class_key,
                    provenance="confirmed" if action == "confirm" else "new",
                )
            )
        return out

    def _negatives_for(self, state: ClassState) -> list[Sample]:
        neg: list[Sample] = []
        for other_key in sorted(self.classes):
            if other_key == state.class_key:
                continue
            neg.extend(self._samples_of(self.classes[other_key]))
        for zone_id in sorted(state.rejected):
            if zone_id in self.zones:
                neg.append(
                    Sample(
                        zone_id=zone_id,
                        feature=self.zones[zone_id].feature,
                        class_key=f"~rejected:{state.class_key}",
                        provenance="confirmed",
                    )
                )
        return neg

    def _retrain(self, state: ClassState, now: float) -> None:
        samples = self._samples_of(state)
        config = self._train_config()
        if not samples:
            state.model = None
            state.curves = None
            state.hitlist = None
            state.version += 1
            return
        model = train_class(
            samples,
            config,
            negatives=self._negatives_for(state),
            class_key=state.class_key,
        )
        state.version += 1
        model.version = state.version
        state.model = model
        self._regenerate_hitlist(state, samples, now)

    def _regenerate_hitlist(
        self, state: ClassState, samples: list[Sample], now: float
    ) -> None:
        """Score the candidate pool; keep the top slice and the residuals."""
        candidates = []
        for zone_id in sorted(self.zones):
            if zone_id in state.rejected:
                continue
            labeled_to = self.labels.get(zone_id)
            if labeled_to is not None and labeled_to[0] != state.class_key:
                continue  # known member of another class, not residual
            candidates.append(self.zones[zone_id].feature)
        if not candidates or state.model is None:
            state.hitlist = None
            state.curves = None
            return
        labeled_zones = frozenset(state.samples)
        hitlist = rank_hitlist(
            state.model,
            candidates,
            limit=self.config.hitlist_limit,
            labeled_zones=labeled_zones,
        )
        state.hitlist = HitList(
            class_key=hitlist.class_key,
            entries=hitlist.entries,
            model_version=state.version,
            generated_at=now,
        )
        residual = [
            (fv.zone_id, hit_score(state.model, fv.histogram))
            for fv in candidates
            if fv.zone_id not in labeled_zones
        ]
        residual.sort(key=lambda kv: (-kv[1], kv[0]))
        cap = self.config.residual_factor * self.config.hitlist_limit
        residual_scores = np.array([s for _, s in residual[:cap]], dtype=np.float64)
        try:
            state.curves = uncertainty_curves(state.model, samples, residual_scores)
        except DomainError:
            state.curves = None

    def run_cycle(self, now: float | None = None) -> CycleReport:
        """Process due recompute requests: hot books first, prospects next."""
        now = time.time() if now is None else now
        self.cycle_count += 1
        heat = self.book_heat(now)
        due: list[tuple[int, float, str]] = []
        skipped_cold: list[str] = []
        for key, req in list(self.pending.items()):
            if req.debounce_deadline > now:
                continue
            state = self.classes[key]
            book = self._class_book(state)
            hot = heat.get(book) is not None and heat[book].status == "hot"
            if not hot and self.cycle_count % self.config.cold_every_k != 0:
                skipped_cold.append(key)
                continue
            score = -1.0
            if state.curves is not None:
                score = prospect_score(
                    state.curves,
                    near_boundary_count(state.curves),
                    self.label_velocity(key, now),
                    self.config.velocity_cap,
                ).score
            due.append((0 if hot else 1, -score, key))
        due.sort()

        retrained: list[str] = []
        failures: list[dict] = []
        durations: dict[str, float] = {}
        regenerated = 0
        for _, _, key in due:
            state = self.classes[key]
            t0 = time.perf_counter()
            try:
                self._retrain(state, now)
            except Exception as exc:  # noqa: BLE001 - cycle must survive
                req = self.pending[key]
                req.debounce_deadline = now + 2 * self.config.debounce_seconds
                failures.append({"class_key": key, "error": str(exc)})
                continue
            durations[key] = time.perf_counter() - t0
            del self.pending[key]
            retrained.append(key)
            if state.hitlist is not None:
                regenerated += 1

        entry = {
            "cycle_index": self.cycle_count,
            "now": now,
            "after_event_id": self.log.events[-1].event_id if self.log.events else 0,
        }
        self.cycle_journal.append(entry)
        if self.cycle_journal_path is not None:
            with open(self.cycle_journal_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        return CycleReport(
            cycle_index=self.cycle_count,
            classes_retrained=retrained,
            hitlists_regenerated=regenerated,
            skipped_cold=skipped_cold,
            failures=failures,
            durations=durations,
        )

    # ------------------------------------------------------------------
    # queries

    def trained_models(self) -> list[ClassModel]:
        return [
            s.model
            for _, s in sorted(self.classes.items())
            if s.model is not None and s.model.trained
        ]

    def classify_feature(self, x: np.ndarray, top_n: int = 5) -> list[tuple[str, float]]:
        models = self.trained_models()
        if not models:
            return []
        return classify(x, models, top_n=top_n)

    def prospects(self, now: float | None = None, top: int | None = None) -> list[Prospect]:
        now = time.time() if now is None else now
        out = []
        for key in sorted(self.classes):
            state = self.classes[key]
            if state.curves is None:
                continue
            out.append(
                prospect_score(
                    state.curves,
                    near_boundary_count(state.curves),
                    self.label_velocity(key, now),
                    self.config.velocity_cap,
                )
            )
        out.sort(key=lambda p: (-p.score, p.class_key))
        return out if top is None else out[:top]

    def classes_summary(self) -> list[dict]:
        rows = []
        for key in sorted(self.classes):
            s = self.classes[key]
            rows.append(
                {
                    "class_key": key,
                    "label": s.label,
                    "n_labels": s.n_labels,
                    "regime": s.model.regime.value if s.model else Regime.ZERO_LABEL.value,
                    "model_version": s.version,
                    "eur": s.curves.eur if s.curves else None,
                }
            )
        return rows

    def state_fingerprint(self) -> bytes:
        """Canonical bytes of materialized label state and model versions."""
        digest = hashlib.sha256()
        payload = {
            "labels": {z: list(v) for z, v in sorted(self.labels.items())},
            "rejected": {
                k: sorted(s.rejected) for k, s in sorted(self.classes.items()) if s.rejected
            },
            "versions": {k: s.version for k, s in sorted(self.classes.items())},
            "event_count": len(self.log.events),
            "last_event_id": self.log.events[-1].event_id if self.log.events else 0,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        digest.update(blob)
        for key in sorted(self.classes):
            model = self.classes[key].model
            if model is None:
                continue
            digest.update(key.encode())
            digest.update(model.regime.value.encode())
            for arr in (model.exemplars, model.centroid, model.variance, model.svm_w):
                if arr is not None:
                    digest.update(np.ascontiguousarray(arr).tobytes())
            if model.svm_b is not None:
                digest.update(np.float64(model.svm_b).tobytes())
        return blob + b"#" + digest.hexdigest().encode()

    def replay_into(self, other: "Engine") -> None:
        """Re-drive a fresh engine from this engine's log and cycle journal."""
        replay_session(other, self.log.events, self.cycle_journal)

    def _apply_replayed_batch(self, batch: list[LabelEvent]) -> None:
        self.log.append(batch)
        touched = self._materialize_events(batch)
        now = batch[-1].timestamp
        for key in sorted(touched):
            if key not in self.pending:
                self.pending[key] = RecomputeRequest(
                    class_key=key,
                    reason=touched[key],
                    enqueued_at=now,
                    debounce_deadline=now + self.config.debounce_seconds,
                )


def replay_session(
    target: Engine, events: Sequence[LabelEvent], journal: Sequence[dict]
) -> None:
    """Reapply a recorded session: batches at their log positions, cycles
    at their journaled timestamps.

    The target must already hold the same zones, pages, and codebook; its
    log must be empty. Training is deterministic, so the rebuilt state is
    byte-identical to the original (state_fingerprint equality).
    """
    if target.log.events:
        raise DomainError("replay target must start from an empty log")

    def next_batch(idx: int) -> tuple[list[LabelEvent], int]:
        batch = [events[idx]]
        idx += 1
        while idx < len(events) and events[idx].batch_id == batch[0].batch_id:
            batch.append(events[idx])
            idx += 1
        return batch, idx

    idx = 0
    for entry in journal:
        watermark = entry["after_event_id"]
        while idx < len(events) and events[idx].event_id <= watermark:
            batch, idx = next_batch(idx)
            target._apply_replayed_batch(batch)
        target.run_cycle(now=entry["now"])
    while idx < len(events):
        batch, idx = next_batch(idx)
        target._apply_replayed_batch(batch)


def harvest_curve(
    events: Sequence[LabelEvent],
    book_of: Callable[[str], str] | None = None,
    book_id: str | None = None,
    bucket_seconds: float = 60.0,
) -> list[HarvestPoint]:
    """Cumulative human-label count per time bucket (rejects excluded)."""
    if bucket_seconds <= 0:
        raise ParameterError("bucket must be > 0")
    label_events = [ev for ev in events if ev.action in ("new", "confirm")]
    if book_id is not None:
        if book_of is None:
            raise ParameterError("book filter requires a zone-to-book mapping")
        label_events = [ev for ev in label_events if book_of(ev.zone_id) == book_id]
    if not label_events:
        return []
    times = np.array([ev.timestamp for ev in label_events])
    lo = np.floor(times.min() / bucket_seconds) * bucket_seconds
    hi = np.floor(times.max() / bucket_seconds) * bucket_seconds
    points = []
    cumulative = 0
    edge = lo
    while edge <= hi + 1e-9:
        cumulative = int(np.sum(times < edge + bucket_seconds))
        points.append(
            HarvestPoint(
                timestamp=edge + bucket_seconds,
                cumulative_labels=cumulative,
                book_id=book_id if book_id is not None else "*",
            )
        )
        edge += bucket_seconds
    return points


def peak_rate(events: Sequence[LabelEvent], window_seconds: float = 60.0) -> float:
    """Maximum labels added within any sliding window, in labels/minute."""
    times = sorted(ev.timestamp for ev in events if ev.action in ("new", "confirm"))
    if not times:
        return 0.0
    best = 0
    j = 0
    for i in range(len(times)):
        while times[i] - times[j] > window_seconds:
            j += 1
        best = max(best, i - j + 1)
    return best * 60.0 / window_seconds


@dataclass
class SessionReport:
    policy: str
    interactions_run: int
    warmup_interactions: int
    labels: int
    labels_per_interaction: float
    post_warmup_rate: float
    accuracy_trace: list[float]
    exhausted: bool

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "interactions_run": self.interactions_run,
            "warmup_interactions": self.warmup_interactions,
            "labels": self.labels,
            "labels_per_interaction": self.labels_per_interaction,
            "post_warmup_rate": self.post_warmup_rate,
            "accuracy_trace": self.accuracy_trace,
            "exhausted": self.exhausted,
        }


def _held_out_accuracy(engine: Engine, test_set: Sequence[tuple[np.ndarray, str]]) -> float:
    if not test_set:
        return 0.0
    correct = 0
    for x, truth in test_set:
        top = engine.classify_feature(x, top_n=1)
        if top and top[0][0] == truth:
            correct += 1
    return correct / len(test_set)


def simulate_user(
    engine: Engine,
    truth: dict[str, str],
    test_set: Sequence[tuple[np.ndarray, str]],
    policy: str,
    interactions: int,
    seed: int,
    warmup: int = 24,
    max_rejects: int = 10,
    step_seconds: float = 60.0,
    start_time: float = 1_000_000.0,
) -> SessionReport:
    """Deterministic oracle-labeler session against a loaded engine.

    Sequential policy transcribes one ground-truth zone per interaction.
    Prospects policy seeds classes during warm-up, then reviews the top
    prospect's hit list each interaction, confirming every true positive
    and rejecting up to max_rejects impostors. A cycle runs after every
    interaction on a simulated clock, so runs are reproducible per seed.
    """
    if policy not in ("prospects", "sequential"):
        raise ParameterError(f"unknown policy {policy!r}")
    rng = np.random.default_rng(seed)
    order = sorted(truth)
    rng.shuffle(order)
    unlabeled = list(order)
    by_class: dict[str, list[str]] = {}
    for z in order:
        by_class.setdefault(truth[z], []).append(z)
    class_ring = sorted(by_class)

    clock = start_time
    labels = 0
    warmup_labels = 0
    trace: list[float] = []
    exhausted = False
    warmup = warmup if policy == "prospects" else 0
    ran = 0

    for i in range(interactions):
        if not unlabeled:
            exhausted = True
            break
        ran += 1
        clock += step_seconds
        batch_id = f"sim-{policy}-{i:05d}"
        drafts: list[LabelDraft] = []

        def widen_one(target_class: str | None = None) -> int:
            pool = unlabeled if target_class is None else [
                z for z in unlabeled if truth[z] == target_class
            ]
            if not pool:
                pool = unlabeled
            zone = pool[0]
            unlabeled.remove(zone)
            drafts.append(
                LabelDraft(
                    zone_id=zone,
                    label=truth[zone],
                    action="new",
                    mode="widening",
                    user="oracle",
                )
            )
            return 1

        if policy == "sequential":
            gained = widen_one()
        elif i < warmup:
            gained = widen_one(class_ring[i % len(class_ring)])
        else:
            prospects = engine.prospects(now=clock)
            gained = 0
            reviewed = False
            unlabeled_set = set(unlabeled)
            for p in prospects:
                state = engine.classes[p.class_key]
                if state.hitlist is None:
                    continue
                fresh = [
                    e for e in state.hitlist.entries
                    if not e.already_labeled and e.zone_id in unlabeled_set
                ]
                true_hits = [e for e in fresh if truth[e.zone_id] == p.class_key]
                if not true_hits:
                    continue
                reviewed = True
                false_hits = [e for e in fresh if truth[e.zone_id] != p.class_key]
                for e in true_hits:
                    unlabeled.remove(e.zone_id)
                    drafts.append(
                        LabelDraft(
                            zone_id=e.zone_id,
                            label=p.class_key,
                            action="confirm",
                            mode="deepening",
                            user="oracle",
                        )
                    )
                    gained += 1
                for e in false_hits[:max_rejects]:
                    drafts.append(
                        LabelDraft(
                            zone_id=e.zone_id,
                            label=p.class_key,
                            action="reject",
                            mode="deepening",
                            user="oracle",
                        )
                    )
                break
            if not reviewed:
                gained = widen_one()

        if drafts:
            engine.submit_labels(drafts, batch_id=batch_id, now=clock)
        labels += gained
        if i < warmup:
            warmup_labels += gained
        engine.run_cycle(now=clock + engine.config.debounce_seconds + 1.0)
        trace.append(_held_out_accuracy(engine, test_set))

    post = labels - warmup_labels
    post_n = max(ran - warmup, 0)
    return SessionReport(
        policy=policy,
        interactions_run=ran,
        warmup_interactions=min(warmup, ran),
        labels=labels,
        labels_per_interaction=labels / ran if ran else 0.0,
        post_warmup_rate=post / post_n if post_n else 0.0,
        accuracy_trace=trace,
        exhausted=exhausted,
    )

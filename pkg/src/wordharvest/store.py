"""Collection persistence and document exports.

State is stored as flat files: a manifest, page and zone images as PGM,
features and codebook as npz, and the label history as JSONL (events plus
the cycle journal). Loading replays the history through a fresh engine,
so the persisted truth is the log, never a model dump. Exports are pure
functions of materialized state: re-exporting without new events yields
bit-identical bytes.
"""

from __future__ import annotations

import json
import math
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from xml.etree import ElementTree as ET

import numpy as np

from .errors import (
    DomainError,
    ExpiredTokenError,
    MigrationError,
    ParameterError,
    UnknownTokenError,
)
from .features import Codebook, FeatureVector, PatchConfig
from .harvest import Engine, EngineConfig, EventLog, replay_session
from .ballpark import TrainConfig
from .ranking import hit_score
from .segmentation import LineBand, WordZone, zone_iou
from .imaging import load_pgm, save_pgm

__all__ = [
    "FORMAT_VERSION",
    "IndexEntry",
    "DownloadToken",
    "ExportStore",
    "build_index",
    "persist_collection",
    "load_collection",
    "export_wordlist",
    "export_transcription",
    "export_pagexml",
    "parse_pagexml_words",
]

FORMAT_VERSION = 1

PAGE_NS = "http://schema.primaresearch.org/PAGE/gts/pagecontent/2013-07-15"


@dataclass(frozen=True)
class IndexEntry:
    class_key: str
    zone_id: str
    status: str  # hypothesis | confirmed
    score: float
    model_version: int


def build_index(engine: Engine) -> list[IndexEntry]:
    """The raw index: confirmed labels plus current hit-list hypotheses."""
    entries: list[IndexEntry] = []
    for zone_id in sorted(engine.labels):
        class_key, _ = engine.labels[zone_id]
        state = engine.classes[class_key]
        score = 0.0
        if state.model is not None and state.model.trained:
            score = hit_score(state.model, engine.zones[zone_id].feature.histogram)
        entries.append(
            IndexEntry(
                class_key=class_key,
                zone_id=zone_id,
                status="confirmed",
                score=score,
                model_version=state.version,
            )
        )
    for class_key in sorted(engine.classes):
        state = engine.classes[class_key]
        if state.hitlist is None:
            continue
        for e in state.hitlist.entries:
            if e.already_labeled:
                continue
            entries.append(
                IndexEntry(
                    class_key=class_key,
                    zone_id=e.zone_id,
                    status="hypothesis",
                    score=e.score,
                    model_version=state.hitlist.model_version,
                )
            )
    return entries


# ---------------------------------------------------------------------------
# persistence


def _train_config_json(t: TrainConfig) -> dict:
    return {
        "augment_target": t.augment_target,
        "augment_amplitude": t.augment_amplitude,
        "augment_smoothness": t.augment_smoothness,
        "variance_floor_scale": t.variance_floor_scale,
        "svm_c": t.svm_c,
        "svm_epochs": t.svm_epochs,
        "svm_seed": t.svm_seed,
        "negative_ratio": t.negative_ratio,
        "seed": t.seed,
    }


def _engine_config_json(c: EngineConfig) -> dict:
    return {
        "debounce_seconds": c.debounce_seconds,
        "hot_label_threshold": c.hot_label_threshold,
        "hot_window_seconds": c.hot_window_seconds,
        "cold_every_k": c.cold_every_k,
        "hitlist_limit": c.hitlist_limit,
        "residual_factor": c.residual_factor,
        "velocity_cap": c.velocity_cap,
        "velocity_window_seconds": c.velocity_window_seconds,
        "default_book": c.default_book,
        "train": _train_config_json(c.train),
    }


def _engine_config_from_json(data: dict) -> EngineConfig:
    data = dict(data)
    train = TrainConfig(**data.pop("train"))
    return EngineConfig(train=train, **data)


def _band_json(band: LineBand) -> dict:
    out = {"top": band.top, "bottom": band.bottom}
    if band.seam_top is not None:
        out["seam_top"] = np.asarray(band.seam_top).tolist()
    if band.seam_bottom is not None:
        out["seam_bottom"] = np.asarray(band.seam_bottom).tolist()
    return out


def _band_from_json(page_id: str, data: dict) -> LineBand:
    band = LineBand(page_id=page_id, top=data["top"], bottom=data["bottom"])
    if "seam_top" in data:
        band.seam_top = np.asarray(data["seam_top"], dtype=np.int64)
    if "seam_bottom" in data:
        band.seam_bottom = np.asarray(data["seam_bottom"], dtype=np.int64)
    return band


def persist_collection(
    engine: Engine,
    root: str | Path,
    collection_id: str = "collection",
    name: str = "",
) -> Path:
    """Write the whole collection as inspectable flat files."""
    root = Path(root)
    (root / "pages").mkdir(parents=True, exist_ok=True)
    (root / "zones").mkdir(parents=True, exist_ok=True)

    books: dict[str, list[str]] = {}
    for pid in sorted(engine.pages):
        books.setdefault(engine.pages[pid].book_id, []).append(pid)
    manifest = {
        "format_version": FORMAT_VERSION,
        "collection_id": collection_id,
        "name": name,
        "books": [
            {"book_id": b, "page_ids": pids} for b, pids in sorted(books.items())
        ],
        "patch": {
            "patch": engine.patch_config.patch,
            "stride": engine.patch_config.stride,
            "norm": engine.patch_config.norm,
        },
        "codebook": (
            {
                "k": engine.codebook.k,
                "seed": engine.codebook.seed,
                "config_hash": engine.codebook.config_hash,
            }
            if engine.codebook is not None
            else None
        ),
        "config": _engine_config_json(engine.config),
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )

    pages = []
    for pid in sorted(engine.pages):
        rec = engine.pages[pid]
        entry = {
            "page_id": pid,
            "book_id": rec.book_id,
            "lines": [_band_json(b) for b in rec.lines],
            "image": None,
        }
        if rec.image is not None:
            entry["image"] = f"pages/{pid}.pgm"
            save_pgm(root / entry["image"], rec.image)
        pages.append(entry)
    (root / "pages.json").write_text(
        json.dumps(pages, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )

    zones = []
    zone_ids = sorted(engine.zones)
    for i, zone_id in enumerate(zone_ids):
        rec = engine.zones[zone_id]
        z = rec.zone
        entry = {
            "zone_id": zone_id,
            "page_id": z.page_id,
            "line_idx": z.line_idx,
            "x": z.x,
            "y": z.y,
            "w": z.w,
            "h": z.h,
            "source": z.source,
            "image": None,
        }
        if rec.image is not None:
            entry["image"] = f"zones/{i:06d}.pgm"
            save_pgm(root / entry["image"], np.where(rec.image, 0, 255).astype(np.uint8))
        zones.append(entry)
    (root / "zones.json").write_text(
        json.dumps(zones, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )

    if zone_ids:
        matrix = np.stack([engine.zones[z].feature.histogram for z in zone_ids])
        empty = np.array([engine.zones[z].feature.empty for z in zone_ids])
        norms = np.array([engine.zones[z].feature.norm for z in zone_ids])
        np.savez_compressed(
            root / "features.npz",
            zone_ids=np.array(zone_ids),
            matrix=matrix,
            empty=empty,
            norms=norms,
        )
    if engine.codebook is not None:
        np.savez_compressed(
            root / "codebook.npz",
            centroids=engine.codebook.centroids,
            k=engine.codebook.k,
            seed=engine.codebook.seed,
            config_hash=engine.codebook.config_hash,
        )

    with open(root / "events.jsonl", "w", encoding="utf-8") as fh:
        for ev in engine.log.events:
            fh.write(json.dumps(ev.to_json(), sort_keys=True) + "\n")
    with open(root / "cycles.jsonl", "w", encoding="utf-8") as fh:
        for entry in engine.cycle_journal:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return root


def load_collection(root: str | Path) -> Engine:
    """Rebuild an engine by replaying the persisted session.

    Models, hit lists, and versions come out of the replay, not from any
    serialized model dump; load(persist(S)) is observationally equal to S.
    """
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise MigrationError(f"collection format {version} != supported {FORMAT_VERSION}")

    config = _engine_config_from_json(manifest["config"])
    engine = Engine(config=config)
    patch = PatchConfig(**manifest["patch"])
    if manifest["codebook"] is not None and (root / "codebook.npz").exists():
        data = np.load(root / "codebook.npz")
        engine.set_codebook(
            Codebook(
                k=int(data["k"]),
                centroids=data["centroids"],
                config_hash=str(data["config_hash"]),
                seed=int(data["seed"]),
            ),
            patch,
        )
    else:
        engine.patch_config = patch

    pages = json.loads((root / "pages.json").read_text(encoding="utf-8"))
    for entry in pages:
        image = load_pgm(root / entry["image"]) if entry["image"] else None
        engine.add_page(
            entry["page_id"],
            book_id=entry["book_id"],
            image=image,
            lines=[_band_from_json(entry["page_id"], b) for b in entry["lines"]],
        )

    features = {}
    if (root / "features.npz").exists():
        data = np.load(root / "features.npz")
        for i, zone_id in enumerate(data["zone_ids"].tolist()):
            features[zone_id] = FeatureVector(
                zone_id=zone_id,
                histogram=data["matrix"][i],
                norm=str(data["norms"][i]),
                empty=bool(data["empty"][i]),
            )
    zones = json.loads((root / "zones.json").read_text(encoding="utf-8"))
    for entry in zones:
        zone = WordZone(
            zone_id=entry["zone_id"],
            page_id=entry["page_id"],
            line_idx=entry["line_idx"],
            x=entry["x"],
            y=entry["y"],
            w=entry["w"],
            h=entry["h"],
            source=entry["source"],
        )
        image = None
        if entry["image"]:
            image = load_pgm(root / entry["image"]) == 0
        if zone.zone_id not in features:
            raise DomainError(f"zone {zone.zone_id} has no stored feature")
        engine.add_zone(zone, features[zone.zone_id], image=image)

    events_path = root / "events.jsonl"
    journal_path = root / "cycles.jsonl"
    dropped = 0
    if events_path.exists():
        src = EventLog(events_path)
        dropped = src.dropped_partial
        journal = []
        if journal_path.exists():
            for line in journal_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    journal.append(json.loads(line))
        replay_session(engine, src.events, journal)
    engine.log.path = events_path
    engine.cycle_journal_path = journal_path
    engine.collection_meta = {
        "collection_id": manifest["collection_id"],
        "name": manifest["name"],
        "dropped_partial_events": dropped,
    }
    return engine


# ---------------------------------------------------------------------------
# exports


def export_wordlist(engine: Engine) -> str:
    """Alphabetic word list as TSV, bit-stable for a given state."""
    lines = ["label\tconfirmed_count\thypothesis_count\tzone_ids"]
    for class_key in sorted(engine.classes, key=lambda k: engine.classes[k].label):
        state = engine.classes[class_key]
        hypotheses = 0
        if state.hitlist is not None:
            hypotheses = sum(1 for e in state.hitlist.entries if not e.already_labeled)
        zone_ids = ",".join(sorted(state.samples))
        lines.append(f"{state.label}\t{state.n_labels}\t{hypotheses}\t{zone_ids}")
    return "\n".join(lines) + "\n"


def _zone_hypothesis(engine: Engine, zone_id: str) -> tuple[str, str, float, bool] | None:
    """Best class for an unlabeled zone: (class_key, label, score, confident)."""
    top = engine.classify_feature(engine.zones[zone_id].feature.histogram, top_n=1)
    if not top:
        return None
    class_key = top[0][0]
    state = engine.classes[class_key]
    score = hit_score(state.model, engine.zones[zone_id].feature.histogram)
    confident = state.curves is not None and score >= state.curves.eur_threshold
    return class_key, state.label, score, confident


def _percentile_floor(engine: Engine, class_key: str, percentile: float) -> float:
    state = engine.classes[class_key]
    if state.curves is None:
        return math.inf
    pool = np.concatenate([state.curves.positive_scores, state.curves.residual_scores])
    return float(np.percentile(pool, percentile))


ELLIPSIS = "..."


def export_transcription(
    engine: Engine, page_id: str, confidence_floor: float | None = None
) -> str:
    """Provisional page text: confirmed words, confident hypotheses, and
    ellipses for everything uncertain.

    Zones are chosen per line greedily by score with IoU > 0.3 suppression;
    confirmed labels always win. confidence_floor, when given, is a score
    percentile (0..100) within the class's current score pool; the default
    floor is the class's EUR threshold.
    """
    if page_id not in engine.pages:
        raise DomainError(f"unknown page {page_id}")
    by_line: dict[int, list[str]] = {}
    for zone_id in sorted(engine.zones):
        z = engine.zones[zone_id].zone
        if z.page_id == page_id:
            by_line.setdefault(z.line_idx, []).append(zone_id)

    out_lines = []
    n_lines = len(engine.pages[page_id].lines) or (
        (max(by_line) + 1) if by_line else 0
    )
    for line_idx in range(n_lines):
        zone_ids = by_line.get(line_idx, [])
        candidates = []  # (priority, score, zone_id, token)
        for zone_id in zone_ids:
            labeled = engine.labels.get(zone_id)
            if labeled is not None:
                state = engine.classes[labeled[0]]
                candidates.append((0, 0.0, zone_id, state.label))
                continue
            hyp = _zone_hypothesis(engine, zone_id)
            if hyp is None:
                candidates.append((1, -math.inf, zone_id, ELLIPSIS))
                continue
            key, label, score, confident = hyp
            if confidence_floor is not None:
                confident = score >= _percentile_floor(engine, key, confidence_floor)
            candidates.append((1, score, zone_id, label if confident else ELLIPSIS))

        candidates.sort(key=lambda c: (c[0], -c[1], c[2]))
        selected: list[str] = []
        for _, _, zone_id, token in candidates:
            zone = engine.zones[zone_id].zone
            if any(zone_iou(zone, engine.zones[s].zone) > 0.3 for s in selected):
                continue
            selected.append(zone_id)
        selected.sort(key=lambda zid: engine.zones[zid].zone.x)
        tokens = []
        token_of = {zid: tok for _, _, zid, tok in candidates}
        for zid in selected:
            tok = token_of[zid]
            if tok == ELLIPSIS and tokens and tokens[-1] == ELLIPSIS:
                continue
            tokens.append(tok)
        out_lines.append(" ".join(tokens))
    return "\n".join(out_lines) + "\n"


def _rect_points(x: int, y: int, w: int, h: int) -> str:
    return f"{x},{y} {x + w},{y} {x + w},{y + h} {x},{y + h}"


def export_pagexml(engine: Engine, page_id: str) -> str:
    """PAGE-XML subset: Page > TextRegion > TextLine > Word > TextEquiv.

    Only confirmed words and confident hypotheses become Word elements;
    geometry re-parses losslessly. Output depends only on materialized
    state, so it is hash-stable.
    """
    if page_id not in engine.pages:
        raise DomainError(f"unknown page {page_id}")
    page_rec = engine.pages[page_id]
    if page_rec.image is not None:
        height, width = page_rec.image.shape
    else:
        width = max((z.zone.x + z.zone.w for z in engine.zones.values()
                     if z.zone.page_id == page_id), default=0)
        height = max((z.zone.y + z.zone.h for z in engine.zones.values()
                      if z.zone.page_id == page_id), default=0)

    last_ts = engine.log.events[-1].timestamp if engine.log.events else 0.0
    created = datetime.fromtimestamp(last_ts, tz=timezone.utc).isoformat()

    ET.register_namespace("", PAGE_NS)
    root = ET.Element(f"{{{PAGE_NS}}}PcGts")
    meta = ET.SubElement(root, f"{{{PAGE_NS}}}Metadata")
    ET.SubElement(meta, f"{{{PAGE_NS}}}Creator").text = "wordharvest"
    ET.SubElement(meta, f"{{{PAGE_NS}}}Created").text = created
    page_el = ET.SubElement(
        root,
        f"{{{PAGE_NS}}}Page",
        attrib={
            "imageFilename": f"pages/{page_id}.pgm",
            "imageWidth": str(width),
            "imageHeight": str(height),
        },
    )
    region = ET.SubElement(page_el, f"{{{PAGE_NS}}}TextRegion", attrib={"id": "r0"})
    ET.SubElement(
        region, f"{{{PAGE_NS}}}Coords", attrib={"points": _rect_points(0, 0, width, height)}
    )

    by_line: dict[int, list[str]] = {}
    for zone_id in sorted(engine.zones):
        z = engine.zones[zone_id].zone
        if z.page_id == page_id:
            by_line.setdefault(z.line_idx, []).append(zone_id)

    word_n = 0
    for line_idx, band in enumerate(page_rec.lines):
        line_el = ET.SubElement(
            region, f"{{{PAGE_NS}}}TextLine", attrib={"id": f"l{line_idx}"}
        )
        ET.SubElement(
            line_el,
            f"{{{PAGE_NS}}}Coords",
            attrib={"points": _rect_points(0, band.top, width, band.bottom - band.top)},
        )
        for zone_id in sorted(
            by_line.get(line_idx, []), key=lambda zid: engine.zones[zid].zone.x
        ):
            labeled = engine.labels.get(zone_id)
            if labeled is not None:
                text = engine.classes[labeled[0]].label
            else:
                hyp = _zone_hypothesis(engine, zone_id)
                if hyp is None or not hyp[3]:
                    continue
                text = hyp[1]
            z = engine.zones[zone_id].zone
            word_el = ET.SubElement(
                line_el, f"{{{PAGE_NS}}}Word", attrib={"id": f"w{word_n}"}
            )
            word_n += 1
            ET.SubElement(
                word_el,
                f"{{{PAGE_NS}}}Coords",
                attrib={"points": _rect_points(z.x, z.y, z.w, z.h)},
            )
            eq = ET.SubElement(word_el, f"{{{PAGE_NS}}}TextEquiv")
            ET.SubElement(eq, f"{{{PAGE_NS}}}Unicode").text = text
    body = ET.tostring(root, encoding="unicode")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n"


def parse_pagexml_words(xml_text: str) -> list[dict]:
    """Word geometry and text read back from a PAGE-XML export."""
    root = ET.fromstring(xml_text)
    out = []
    for word in root.iter(f"{{{PAGE_NS}}}Word"):
        coords = word.find(f"{{{PAGE_NS}}}Coords").attrib["points"]
        xs, ys = [], []
        for pair in coords.split(" "):
            x, y = pair.split(",")
            xs.append(int(x))
            ys.append(int(y))
        text_el = word.find(f"{{{PAGE_NS}}}TextEquiv/{{{PAGE_NS}}}Unicode")
        out.append(
            {
                "x": min(xs),
                "y": min(ys),
                "w": max(xs) - min(xs),
                "h": max(ys) - min(ys),
                "text": text_el.text,
            }
        )
    return out


# ---------------------------------------------------------------------------
# download tokens


@dataclass(frozen=True)
class DownloadToken:
    token: str
    export_id: str
    expires_at: float

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "export_id": self.export_id,
            "expires_at": self.expires_at,
        }


@dataclass
class ExportStore:
    """In-memory export payloads plus time-limited download tokens."""

    root: Path | None = None
    _exports: dict[str, bytes] = field(default_factory=dict)
    _tokens: dict[str, DownloadToken] = field(default_factory=dict)
    _counter: int = 0

    def put(self, content: bytes | str, export_id: str | None = None) -> str:
        if isinstance(content, str):
            content = content.encode("utf-8")
        if export_id is None:
            self._counter += 1
            export_id = f"export-{self._counter:04d}"
        self._exports[export_id] = content
        if self.root is not None:
            exports_dir = Path(self.root) / "exports"
            exports_dir.mkdir(parents=True, exist_ok=True)
            (exports_dir / export_id).write_bytes(content)
        return export_id

    def get(self, export_id: str) -> bytes:
        if export_id not in self._exports:
            raise DomainError(f"unknown export {export_id}")
        return self._exports[export_id]

    def issue_download(
        self, export_id: str, ttl_seconds: float, now: float | None = None
    ) -> DownloadToken:
        if export_id not in self._exports:
            raise DomainError(f"unknown export {export_id}")
        if ttl_seconds <= 0:
            raise ParameterError("ttl must be > 0")
        import time as _time

        now = _time.time() if now is None else now
        token = DownloadToken(
            token=secrets.token_hex(16),
            export_id=export_id,
            expires_at=now + ttl_seconds,
        )
        self._tokens[token.token] = token
        return token

    def redeem(self, token: str, now: float | None = None) -> bytes:
        import time as _time

        now = _time.time() if now is None else now
        rec = self._tokens.get(token)
        if rec is None:
            raise UnknownTokenError("unknown token")
        if now >= rec.expires_at:
            raise ExpiredTokenError("token expired")
        return self._exports[rec.export_id]

"""HTTP facade over the engine for the labeling UI and scripted clients.

Every endpoint is a thin adapter: decode the request, call one library
operation, encode the result. Errors surface as a single JSON shape with
a machine code drawn from a closed catalog, so clients can switch on
`error.code` without parsing prose.
"""

from __future__ import annotations

import base64
import binascii
import threading
import time
from dataclasses import dataclass
from urllib.parse import quote

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .ballpark import CapacityQuery, capacity_estimate
from .errors import (
    ConflictError,
    DomainError,
    ExpiredTokenError,
    ParameterError,
    UnknownTokenError,
    WordharvestError,
)
from .features import build_codebook, extract_descriptors, quantize
from .harvest import Engine, EngineConfig, LabelDraft, harvest_curve, peak_rate
from .imaging import _parse_pgm, binarize, mask_to_png_bytes
from .segmentation import crop_band, oversegment_words, refine_with_seams, segment_lines
from .store import ExportStore, export_pagexml, export_transcription, export_wordlist

__all__ = [
    "ApiError",
    "API_ERRORS",
    "Service",
    "create_app",
    "ingest_page",
    "segment_page",
    "serve",
]


@dataclass(frozen=True)
class ApiError(Exception):
    status: int
    code: str
    message: str

    def body(self) -> dict:
        return {"error": {"status": self.status, "code": self.code, "message": self.message}}


# The closed error catalog: every error path maps to exactly one pair.
API_ERRORS: dict[str, int] = {
    "validation": 400,
    "bad_image": 400,
    "unknown_collection": 404,
    "unknown_class": 404,
    "unknown_zone": 404,
    "unknown_page": 404,
    "unknown_export": 404,
    "unknown_token": 404,
    "no_model": 404,
    "no_image": 404,
    "collection_exists": 409,
    "conflict": 409,
    "token_expired": 410,
}


def _err(code: str, message: str) -> ApiError:
    return ApiError(status=API_ERRORS[code], code=code, message=message)


class Service:
    """Mutable service state: named collections plus the export store.

    A clock callable is injected so tests drive deterministic time; the
    default is wall time.
    """

    def __init__(self, clock=None, default_config: EngineConfig | None = None):
        self.collections: dict[str, Engine] = {}
        self.exports = ExportStore()
        self.clock = clock or time.time
        self.default_config = default_config or EngineConfig()
        self.lock = threading.Lock()

    def add_collection(self, collection_id: str, engine: Engine) -> None:
        self.collections[collection_id] = engine

    def engine(self, collection_id: str) -> Engine:
        if collection_id not in self.collections:
            raise _err("unknown_collection", f"no collection {collection_id}")
        return self.collections[collection_id]

    def find_zone(self, zone_id: str, collection_id: str | None = None):
        if collection_id is not None:
            engine = self.engine(collection_id)
            if zone_id in engine.zones:
                return engine
            raise _err("unknown_zone", f"no zone {zone_id}")
        for engine in self.collections.values():
            if zone_id in engine.zones:
                return engine
        raise _err("unknown_zone", f"no zone {zone_id}")


def _require(body: dict, key: str):
    if not isinstance(body, dict) or key not in body:
        raise _err("validation", f"missing field {key}")
    return body[key]


def segment_page(engine: Engine, page_id: str) -> dict:
    """Segment a registered page into line bands and word zones.

    Builds the collection codebook from the first segmented page when none
    exists yet, then registers every zone with its histogram.
    """
    rec = engine.pages.get(page_id)
    if rec is None:
        raise _err("unknown_page", f"no page {page_id}")
    if rec.image is None:
        raise _err("no_image", f"page {page_id} has no stored pixels")
    mask = binarize(rec.image)
    bands = segment_lines(mask, page_id=page_id)
    bands = refine_with_seams(mask, bands)
    rec.lines = list(bands)
    zones = []
    for line_idx, band in enumerate(bands):
        band_mask = crop_band(mask, band)
        zones.extend(
            oversegment_words(
                band_mask,
                page_id=page_id,
                line_idx=line_idx,
                y_offset=band.top,
            )
        )
    if engine.codebook is None and zones:
        descriptors = []
        for z in zones:
            descriptors.extend(
                extract_descriptors(mask[z.y : z.y + z.h, z.x : z.x + z.w], engine.patch_config)
            )
        if descriptors:
            k = min(32, len(descriptors))
            engine.set_codebook(
                build_codebook(descriptors, k=k, config=engine.patch_config),
                engine.patch_config,
            )
    zone_ids = []
    for z in zones:
        if engine.codebook is None:
            continue
        crop = mask[z.y : z.y + z.h, z.x : z.x + z.w]
        feature = quantize(crop, engine.codebook, engine.patch_config, zone_id=z.zone_id)
        engine.add_zone(z, feature, image=crop)
        zone_ids.append(z.zone_id)
    return {
        "page_id": page_id,
        "book_id": rec.book_id,
        "n_lines": len(bands),
        "n_zones": len(zone_ids),
        "zone_ids": zone_ids,
    }


def ingest_page(engine: Engine, page_id: str, book_id: str, gray, segment: bool = True) -> dict:
    """Register an uploaded page scan, optionally segmenting right away."""
    engine.add_page(page_id, book_id=book_id, image=gray, lines=[])
    if segment:
        return segment_page(engine, page_id)
    return {
        "page_id": page_id,
        "book_id": book_id,
        "n_lines": 0,
        "n_zones": 0,
        "zone_ids": [],
    }


_EXPORT_MEDIA = {
    "wordlist": "text/tab-separated-values; charset=utf-8",
    "transcription": "text/plain; charset=utf-8",
    "pagexml": "application/xml; charset=utf-8",
}


def create_app(service: Service | None = None) -> FastAPI:
    service = service or Service()
    app = FastAPI(title="wordharvest", docs_url=None, redoc_url=None)
    app.state.service = service

    # the browser client may be statically hosted on another origin
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(WordharvestError)
    async def _domain_error(request: Request, exc: WordharvestError):
        if isinstance(exc, ConflictError):
            mapped = _err("conflict", str(exc))
        elif isinstance(exc, UnknownTokenError):
            mapped = _err("unknown_token", str(exc))
        elif isinstance(exc, ExpiredTokenError):
            mapped = _err("token_expired", str(exc))
        elif isinstance(exc, ParameterError):
            mapped = _err("validation", str(exc))
        else:
            mapped = _err("validation", str(exc))
        return JSONResponse(status_code=mapped.status, content=mapped.body())

    # ------------------------------------------------------------------
    # collections

    @app.post("/api/v1/collections", status_code=201)
    async def create_collection(body: dict):
        collection_id = _require(body, "collection_id")
        if collection_id in service.collections:
            raise _err("collection_exists", f"collection {collection_id} exists")
        engine = Engine(config=service.default_config)
        engine.collection_meta = {
            "collection_id": collection_id,
            "name": body.get("name", ""),
        }
        with service.lock:
            service.add_collection(collection_id, engine)
        return {"collection_id": collection_id, "name": body.get("name", "")}

    @app.get("/api/v1/collections")
    async def list_collections():
        out = []
        for cid in sorted(service.collections):
            engine = service.collections[cid]
            out.append(
                {
                    "collection_id": cid,
                    "n_pages": len(engine.pages),
                    "n_zones": len(engine.zones),
                    "n_classes": len(engine.classes),
                    "n_events": len(engine.log.events),
                }
            )
        return {"collections": out}

    @app.post("/api/v1/collections/{collection_id}/pages", status_code=201)
    async def upload_page(collection_id: str, body: dict):
        engine = service.engine(collection_id)
        page_id = _require(body, "page_id")
        if page_id in engine.pages:
            raise _err("validation", f"page {page_id} already present")
        encoded = _require(body, "image_pgm_base64")
        try:
            gray = _parse_pgm(base64.b64decode(encoded, validate=True))
        except (binascii.Error, DomainError, ValueError) as exc:
            raise _err("bad_image", f"undecodable page image: {exc}")
        book_id = body.get("book_id") or engine.config.default_book
        with service.lock:
            return ingest_page(engine, page_id, book_id, gray)

    @app.get("/api/v1/collections/{collection_id}/classes")
    async def list_classes(collection_id: str):
        engine = service.engine(collection_id)
        return {"classes": engine.classes_summary()}

    @app.get("/api/v1/classes/{collection_id}/{class_key}/hitlist")
    async def get_hitlist(collection_id: str, class_key: str, limit: int | None = None):
        engine = service.engine(collection_id)
        state = engine.classes.get(class_key)
        if state is None:
            raise _err("unknown_class", f"no class {class_key}")
        if state.hitlist is None:
            raise _err("no_model", f"class {class_key} has no ranked model yet")
        entries = state.hitlist.entries
        if limit is not None:
            if limit < 1:
                raise _err("validation", "limit must be >= 1")
            entries = entries[:limit]
        return {
            "class_key": class_key,
            "label": state.label,
            "model_version": state.hitlist.model_version,
            "generated_at": state.hitlist.generated_at,
            "eur": state.curves.eur if state.curves else None,
            "eur_threshold": state.curves.eur_threshold if state.curves else None,
            "entries": [
                {
                    "zone_id": e.zone_id,
                    "score": e.score,
                    "already_labeled": e.already_labeled,
                    "image_url": f"/api/v1/zones/{quote(e.zone_id, safe='')}/image",
                }
                for e in entries
            ],
        }

    # ------------------------------------------------------------------
    # labels and cycles

    @app.post("/api/v1/labels", status_code=202)
    async def post_labels(body: dict):
        collection_id = _require(body, "collection_id")
        batch_id = _require(body, "batch_id")
        raw_events = _require(body, "events")
        if not isinstance(raw_events, list) or not raw_events:
            raise _err("validation", "events must be a non-empty list")
        engine = service.engine(collection_id)
        drafts = []
        for ev in raw_events:
            drafts.append(
                LabelDraft(
                    zone_id=_require(ev, "zone_id"),
                    label=ev.get("label", ""),
                    action=_require(ev, "action"),
                    mode=ev.get("mode", "deepening"),
                    user=ev.get("user", "anon"),
                )
            )
        with service.lock:
            report = engine.submit_labels(drafts, batch_id=batch_id, now=service.clock())
        return report.to_json()

    @app.post("/api/v1/collections/{collection_id}/cycle")
    async def run_cycle(collection_id: str, body: dict | None = None):
        engine = service.engine(collection_id)
        now = None
        if body and "now" in body:
            now = float(body["now"])
        with service.lock:
            report = engine.run_cycle(now=now if now is not None else service.clock())
        return report.to_json()

    @app.get("/api/v1/collections/{collection_id}/prospects")
    async def get_prospects(collection_id: str, top: int | None = None):
        engine = service.engine(collection_id)
        if top is not None and top < 1:
            raise _err("validation", "top must be >= 1")
        out = []
        for p in engine.prospects(now=service.clock(), top=top):
            out.append(
                {"class_key": p.class_key, "score": p.score, "components": p.components}
            )
        return {"prospects": out}

    @app.get("/api/v1/collections/{collection_id}/metrics/harvest")
    async def get_harvest(
        collection_id: str, bucket: float = 60.0, book: str | None = None
    ):
        engine = service.engine(collection_id)
        points = harvest_curve(
            engine.log.events,
            book_of=engine.book_of,
            book_id=book,
            bucket_seconds=bucket,
        )
        return {
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

    # ------------------------------------------------------------------
    # zone images

    @app.get("/api/v1/zones/{zone_id}/image")
    async def zone_image(zone_id: str, collection: str | None = None):
        engine = service.find_zone(zone_id, collection)
        mask = engine.zone_image(zone_id)
        if mask is None:
            rec = engine.zones[zone_id]
            page = engine.pages[rec.zone.page_id]
            if page.image is None:
                raise _err("no_image", f"zone {zone_id} has no stored pixels")
            z = rec.zone
            mask = binarize(page.image[z.y : z.y + z.h, z.x : z.x + z.w])
        return Response(content=mask_to_png_bytes(mask), media_type="image/png")

    # ------------------------------------------------------------------
    # exports and downloads

    @app.post("/api/v1/exports", status_code=201)
    async def create_export(body: dict):
        collection_id = _require(body, "collection_id")
        kind = _require(body, "kind")
        engine = service.engine(collection_id)
        if kind not in _EXPORT_MEDIA:
            raise _err("validation", f"unknown export kind {kind}")
        if kind == "wordlist":
            content = export_wordlist(engine)
        else:
            page_id = _require(body, "page_id")
            if page_id not in engine.pages:
                raise _err("unknown_page", f"no page {page_id}")
            if kind == "transcription":
                content = export_transcription(
                    engine, page_id, confidence_floor=body.get("confidence_floor")
                )
            else:
                content = export_pagexml(engine, page_id)
        export_id = service.exports.put(content)
        ttl = float(body.get("ttl_seconds", 3600.0))
        token = service.exports.issue_download(export_id, ttl, now=service.clock())
        return {
            "export_id": export_id,
            "kind": kind,
            "token": token.token,
            "expires_at": token.expires_at,
            "download_url": f"/api/v1/downloads/{token.token}",
            "media_type": _EXPORT_MEDIA[kind],
        }

    @app.get("/api/v1/downloads/{token}")
    async def download(token: str):
        content = service.exports.redeem(token, now=service.clock())
        media = "application/octet-stream"
        head = content[:64]
        if head.startswith(b"<?xml"):
            media = _EXPORT_MEDIA["pagexml"]
        elif head.startswith(b"label\t"):
            media = _EXPORT_MEDIA["wordlist"]
        else:
            media = _EXPORT_MEDIA["transcription"]
        return Response(content=content, media_type=media)

    # ------------------------------------------------------------------
    # small utilities

    @app.get("/api/v1/capacity")
    async def capacity(weights: float, dropout: float, samples_per_coeff: int = 5):
        q = CapacityQuery(
            weights=int(weights), dropout_p=dropout, samples_per_coeff=samples_per_coeff
        )
        return {"estimate": capacity_estimate(q)}

    @app.get("/api/v1/health")
    async def health():
        return {"status": "ok", "collections": len(service.collections)}

    return app


def serve(
    service: Service,
    host: str = "127.0.0.1",
    port: int = 8000,
    cycle_interval: float | None = 2.0,
):
    """Run the API with an optional background cycle worker."""
    import uvicorn

    app = create_app(service)
    stop = threading.Event()

    def worker():
        while not stop.is_set():
            with service.lock:
                for engine in list(service.collections.values()):
                    if engine.pending:
                        engine.run_cycle(now=service.clock())
            stop.wait(cycle_interval)

    thread = None
    if cycle_interval is not None:
        thread = threading.Thread(target=worker, daemon=True)
        thread.start()
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        stop.set()
        if thread is not None:
            thread.join(timeout=5.0)

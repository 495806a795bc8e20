"""Line segmentation, seam carving, background filling, word-zone candidates.

Lines come from smoothed horizontal ink profiles; candidate word zones come
from smoothed vertical profiles inside a line band, over-segmented so that
every contiguous concatenation of up to max_merge atomic segments is emitted
as its own zone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ParameterError
from .imaging import ink_profile

__all__ = [
    "LineBand",
    "WordZone",
    "FillResult",
    "segment_lines",
    "carve_seam",
    "fill_background",
    "oversegment_words",
    "refine_with_seams",
    "crop_band",
    "valley_threshold",
    "make_zone_id",
    "zone_iou",
]

SEAM_INK_PENALTY = 1000.0


@dataclass
class LineBand:
    """A horizontal strip [top, bottom) of a page holding one text line.

    Optional per-column seams give curvilinear boundaries where straight
    cuts would slice through ascenders or descenders.
    """

    page_id: str
    top: int
    bottom: int
    seam_top: np.ndarray | None = None
    seam_bottom: np.ndarray | None = None

    def __post_init__(self):
        if self.top >= self.bottom:
            raise ParameterError("band top must lie above bottom")


@dataclass(frozen=True)
class WordZone:
    """A candidate word rectangle inside a line band."""

    zone_id: str
    page_id: str
    line_idx: int
    x: int
    y: int
    w: int
    h: int
    source: str = "projection"  # or "external"

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ParameterError("zone must have positive extent")


@dataclass(frozen=True)
class FillResult:
    image: np.ndarray
    used_fallback: bool = False


def make_zone_id(page_id: str, line_idx: int, x: int, y: int, w: int, h: int) -> str:
    return f"{page_id}#{line_idx}#{x}:{y}:{w}:{h}"


def zone_iou(a: WordZone, b: WordZone) -> float:
    """Intersection over union of two zone rectangles."""
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union else 0.0


def valley_threshold(smoothed: np.ndarray, fraction: float = 0.2) -> float:
    """Threshold separating text rows/columns from valleys: at least one ink
    pixel, otherwise a fraction of the median positive profile value."""
    positive = smoothed[smoothed > 0]
    if positive.size == 0:
        return 1.0
    return max(1.0, fraction * float(np.median(positive)))


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Maximal [start, end) runs of True."""
    idx = np.flatnonzero(np.diff(np.concatenate(([0], flags.astype(np.int8), [0]))))
    return [(int(idx[i]), int(idx[i + 1])) for i in range(0, len(idx), 2)]


def _profile_segments(smoothed: np.ndarray, thr: float, min_gap: int) -> list[tuple[int, int]]:
    """Split the profile into segments around the valley threshold.

    Core runs (>= thr) closer than min_gap merge; each merged core expands to
    its surrounding positive run, split at the valley minimum when several
    cores share one positive run.
    """
    segments = []
    for pstart, pend in _runs(smoothed > 0):
        sub = smoothed[pstart:pend]
        cores = [(s + pstart, e + pstart) for s, e in _runs(sub >= thr)]
        if not cores:
            continue
        merged = [cores[0]]
        for s, e in cores[1:]:
            if s - merged[-1][1] < min_gap:
                merged[-1] = (merged[-1][0], e)
            else:
                merged.append((s, e))
        # expansion bounds: positive-run edge outward, valley argmin inward
        cuts = [pstart]
        for (s0, e0), (s1, _) in zip(merged, merged[1:]):
            valley = e0 + int(np.argmin(smoothed[e0:s1]))
            cuts.append(valley)
        cuts.append(pend)
        segments.extend((cuts[i], cuts[i + 1]) for i in range(len(merged)))
    return segments


def segment_lines(
    mask: np.ndarray,
    window: int = 9,
    min_gap: int = 3,
    page_id: str = "page",
    fraction: float = 0.2,
) -> list[LineBand]:
    """Find text-line bands as runs of the smoothed horizontal ink profile
    above the valley threshold, separated by at least min_gap low-ink rows."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise DomainError("empty image")
    if not mask.any():
        return []
    profile = ink_profile(mask, "horizontal", window)
    thr = valley_threshold(profile.smoothed, fraction)
    return [
        LineBand(page_id=page_id, top=s, bottom=e)
        for s, e in _profile_segments(profile.smoothed, thr, min_gap)
    ]


def carve_seam(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost monotone left-to-right path through a cost map.

    Column steps by +1, row steps in {-1, 0, +1}; ties resolve toward the
    smaller row index. Returns one row index per column.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ParameterError("cost map must be non-empty and 2-D")
    if not np.all(np.isfinite(cost)) or (cost < 0).any():
        raise ParameterError("costs must be finite and non-negative")
    h, w = cost.shape
    dist = cost[:, 0].copy()
    pred = np.zeros((h, w), dtype=np.int64)
    inf = np.inf
    for c in range(1, w):
        up = np.concatenate(([inf], dist[:-1]))
        down = np.concatenate((dist[1:], [inf]))
        stacked = np.stack([up, dist, down])
        choice = np.argmin(stacked, axis=0)  # first minimum: prefers smaller row
        pred[:, c] = np.arange(h) + (choice - 1)
        dist = stacked[choice, np.arange(h)] + cost[:, c]
    path = np.empty(w, dtype=np.int64)
    path[-1] = int(np.argmin(dist))
    for c in range(w - 1, 0, -1):
        path[c - 1] = pred[path[c], c]
    return path


def fill_background(
    gray: np.ndarray,
    ink: np.ndarray,
    mask: np.ndarray,
    seed: int = 0,
) -> FillResult:
    """Replace masked pixels by draws from the crop's own background pixels.

    Background means neither ink nor masked. An all-ink crop falls back to
    the global median luminance and flags it.
    """
    gray = np.asarray(gray, dtype=np.uint8)
    ink = np.asarray(ink, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gray.shape or ink.shape != gray.shape:
        raise ParameterError("mask dimensions must match crop")
    out = gray.copy()
    n = int(mask.sum())
    if n == 0:
        return FillResult(out, used_fallback=False)
    background = gray[~ink & ~mask]
    if background.size == 0:
        out[mask] = np.uint8(np.median(gray))
        return FillResult(out, used_fallback=True)
    rng = np.random.default_rng(seed)
    out[mask] = rng.choice(background, size=n, replace=True)
    return FillResult(out, used_fallback=False)


def oversegment_words(
    band_mask: np.ndarray,
    window: int = 5,
    max_merge: int = 4,
    page_id: str = "page",
    line_idx: int = 0,
    x_offset: int = 0,
    y_offset: int = 0,
    fraction: float = 0.2,
) -> list[WordZone]:
    """Emit overlapping word-zone candidates for one line band.

    Atomic segments are spans of the smoothed vertical profile between gaps;
    every contiguous concatenation of 1..max_merge segments becomes a zone,
    so m atomic segments yield sum over k of max(0, m - k + 1) zones.
    """
    band_mask = np.asarray(band_mask, dtype=bool)
    if band_mask.size == 0:
        raise DomainError("empty band")
    if max_merge < 1:
        raise ParameterError("max_merge must be >= 1")
    if not band_mask.any():
        return []
    profile = ink_profile(band_mask, "vertical", window)
    thr = valley_threshold(profile.smoothed, fraction)
    atoms = _profile_segments(profile.smoothed, thr, min_gap=1)
    zones = []
    m = len(atoms)
    for k in range(1, max_merge + 1):
        for i in range(m - k + 1):
            x0, x1 = atoms[i][0], atoms[i + k - 1][1]
            rows = np.flatnonzero(band_mask[:, x0:x1].any(axis=1))
            if rows.size:
                y0, y1 = int(rows[0]), int(rows[-1]) + 1
            else:
                y0, y1 = 0, band_mask.shape[0]
            x, y, w, h = x0 + x_offset, y0 + y_offset, x1 - x0, y1 - y0
            zones.append(
                WordZone(
                    zone_id=make_zone_id(page_id, line_idx, x, y, w, h),
                    page_id=page_id,
                    line_idx=line_idx,
                    x=x,
                    y=y,
                    w=w,
                    h=h,
                    source="projection",
                )
            )
    return zones


def refine_with_seams(mask: np.ndarray, bands: list[LineBand], margin: int = 4) -> list[LineBand]:
    """Add curvilinear boundaries between touching bands via seam carving.

    The corridor around the straight boundary gets a cost map that strongly
    penalizes cutting ink; the carved seam becomes seam_bottom of the upper
    band and seam_top of the lower band.
    """
    mask = np.asarray(mask, dtype=bool)
    out = [replace(b) for b in bands]
    for upper, lower in zip(out, out[1:]):
        if lower.top - upper.bottom > 0:
            continue
        boundary = upper.bottom
        lo = max(upper.top, boundary - margin)
        hi = min(lower.bottom, boundary + margin)
        if hi - lo < 1:
            continue
        corridor = mask[lo:hi, :]
        cost = corridor.astype(np.float64) * SEAM_INK_PENALTY + 1.0
        seam = carve_seam(cost) + lo
        upper.seam_bottom = seam
        lower.seam_top = seam.copy()
    return out


def crop_band(mask: np.ndarray, band: LineBand) -> np.ndarray:
    """Extract a band's pixels, blanking anything beyond its seams."""
    mask = np.asarray(mask, dtype=bool)
    crop = mask[band.top : band.bottom, :].copy()
    cols = np.arange(crop.shape[1])
    rows = np.arange(band.top, band.bottom)[:, None]
    if band.seam_top is not None:
        crop[rows < band.seam_top[None, :]] = False
    if band.seam_bottom is not None:
        crop[rows >= band.seam_bottom[None, :]] = False
    return crop

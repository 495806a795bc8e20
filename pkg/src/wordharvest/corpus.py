"""Deterministic synthetic corpus: words, composed pages, ground truth.

Pseudo-words drawn from a small alphabet are rendered from the embedded
glyph set, individually morphed and noised, then pasted onto pages with
known line bands and zone boxes. Everything derives from one seed, so a
corpus can be regenerated bit-identically, hashed, and used as the ground
truth for simulated labeling sessions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DomainError, MigrationError, ParameterError
from .features import Codebook, FeatureVector, PatchConfig, build_codebook, extract_descriptors, quantize
from .glyphs import DEFAULT_GLYPHS
from .imaging import MorphParams, binarize, load_pgm, mask_to_gray, save_pgm, synth_word
from .segmentation import LineBand, WordZone, make_zone_id

__all__ = [
    "CorpusSpec",
    "WordInstance",
    "SyntheticCorpus",
    "generate_corpus",
    "corpus_digest",
    "write_corpus",
    "load_corpus",
    "corpus_features",
    "holdout_split",
    "prepare_engine",
]

FORMAT_VERSION = 1

_LABEL_STREAM = 0x6C61626C
_PAGE_STREAM = 0x70616765
_HOLDOUT_STREAM = 0x686F6C64


@dataclass(frozen=True)
class CorpusSpec:
    classes: int
    per_class: int
    seed: int
    word_len: tuple[int, int] = (3, 5)
    alphabet: str = "abcdefgh"
    scale: int = 2
    amplitude: float = 1.5
    smoothness: float = 3.0
    noise_p: float = 0.03
    gap: int = 1
    styles: int = 1
    books: int = 2
    lines_per_page: int = 6
    page_width: int = 560
    margin: int = 6
    line_gap: int = 4
    word_gap: int = 10

    def __post_init__(self):
        if self.classes < 1 or self.per_class < 1:
            raise ParameterError("classes and per_class must be >= 1")
        if self.word_len[0] < 1 or self.word_len[1] < self.word_len[0]:
            raise ParameterError("word_len must be a valid (lo, hi) range")
        if not self.alphabet:
            raise ParameterError("alphabet must be non-empty")
        if self.styles < 1:
            raise ParameterError("styles must be >= 1")
        if self.books < 1:
            raise ParameterError("books must be >= 1")


@dataclass
class WordInstance:
    label: str
    class_idx: int
    instance_idx: int
    style: int
    mask: np.ndarray
    zone: WordZone | None = None


@dataclass
class SyntheticCorpus:
    spec: CorpusSpec
    labels: list[str]
    instances: list[WordInstance]
    pages: dict[str, np.ndarray] = field(default_factory=dict)  # page_id -> bool mask
    lines: dict[str, list[LineBand]] = field(default_factory=dict)
    books: dict[str, str] = field(default_factory=dict)  # page_id -> book_id

    def truth(self) -> dict[str, str]:
        return {w.zone.zone_id: w.label for w in self.instances}

    def by_zone(self) -> dict[str, WordInstance]:
        return {w.zone.zone_id: w for w in self.instances}


def _stable_seed(seed: int, class_idx: int, instance_idx: int) -> int:
    return (((seed + 1) * 1_000_003 + class_idx) * 1_000_003 + instance_idx) % (2**62)


def _bold(glyphs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {ch: ndimage.binary_dilation(g) for ch, g in glyphs.items()}


_STYLE_GLYPHS = [DEFAULT_GLYPHS, _bold(DEFAULT_GLYPHS)]


def _style_glyphs(style: int) -> dict[str, np.ndarray]:
    if style >= len(_STYLE_GLYPHS):
        raise ParameterError(f"no glyph variant for style {style}")
    return _STYLE_GLYPHS[style]


def _generate_labels(spec: CorpusSpec) -> list[str]:
    rng = np.random.default_rng([spec.seed, _LABEL_STREAM])
    letters = list(spec.alphabet)
    labels: list[str] = []
    seen: set[str] = set()
    lo, hi = spec.word_len
    guard = 0
    while len(labels) < spec.classes:
        guard += 1
        if guard > spec.classes * 1000:
            raise DomainError("alphabet too small for requested class count")
        length = int(rng.integers(lo, hi + 1))
        word = "".join(rng.choice(letters, size=length))
        if word in seen:
            continue
        seen.add(word)
        labels.append(word)
    return labels


def generate_corpus(spec: CorpusSpec) -> SyntheticCorpus:
    """Build the full corpus: instances plus composed pages, all from seed."""
    labels = _generate_labels(spec)
    instances: list[WordInstance] = []
    for c, label in enumerate(labels):
        for j in range(spec.per_class):
            style = j % spec.styles
            morph = MorphParams(
                amplitude=spec.amplitude,
                smoothness=spec.smoothness,
                seed=_stable_seed(spec.seed, c, j),
            )
            mask, _ = synth_word(
                label,
                glyphs=_style_glyphs(style),
                scale=spec.scale,
                morph=morph,
                noise_p=spec.noise_p,
                gap=spec.gap,
            )
            instances.append(
                WordInstance(
                    label=label, class_idx=c, instance_idx=j, style=style, mask=mask
                )
            )

    corpus = SyntheticCorpus(spec=spec, labels=labels, instances=instances)
    _compose_pages(corpus)
    return corpus


def _compose_pages(corpus: SyntheticCorpus) -> None:
    """Paste instances onto fixed-grid pages, assigning zones and bands."""
    spec = corpus.spec
    rng = np.random.default_rng([spec.seed, _PAGE_STREAM])
    order = rng.permutation(len(corpus.instances))
    slot_h = max(w.mask.shape[0] for w in corpus.instances)
    page_h = 2 * spec.margin + spec.lines_per_page * slot_h + (
        spec.lines_per_page - 1
    ) * spec.line_gap

    page_idx = -1
    line_idx = spec.lines_per_page  # force a fresh page on first word
    x = 0
    page = None
    page_id = ""

    def open_page():
        nonlocal page_idx, line_idx, page, page_id
        page_idx += 1
        page_id = f"page-{page_idx:04d}"
        page = np.zeros((page_h, spec.page_width), dtype=bool)
        corpus.pages[page_id] = page
        corpus.books[page_id] = f"book-{page_idx % spec.books}"
        corpus.lines[page_id] = []
        line_idx = -1

    def open_line():
        nonlocal line_idx, x
        line_idx += 1
        top = spec.margin + line_idx * (slot_h + spec.line_gap)
        corpus.lines[page_id].append(
            LineBand(page_id=page_id, top=top, bottom=top + slot_h)
        )
        x = spec.margin

    for idx in order:
        inst = corpus.instances[idx]
        h, w = inst.mask.shape
        if w > spec.page_width - 2 * spec.margin:
            raise DomainError(f"word {inst.label!r} wider than the page")
        if (
            page is None
            or line_idx < 0
            or x + w > spec.page_width - spec.margin
        ):
            if page is None or line_idx + 1 >= spec.lines_per_page:
                open_page()
            open_line()
        band = corpus.lines[page_id][line_idx]
        y = band.top + (slot_h - h) // 2
        page[y : y + h, x : x + w] |= inst.mask
        zone_id = make_zone_id(page_id, line_idx, x, y, w, h)
        inst.zone = WordZone(
            zone_id=zone_id,
            page_id=page_id,
            line_idx=line_idx,
            x=x,
            y=y,
            w=w,
            h=h,
            source="corpus",
        )
        x += w + spec.word_gap


def _pgm_bytes(gray: np.ndarray) -> bytes:
    h, w = gray.shape
    return b"P5\n%d %d\n255\n" % (w, h) + gray.astype(np.uint8).tobytes()


def _manifest(corpus: SyntheticCorpus) -> dict:
    spec_dict = asdict(corpus.spec)
    spec_dict["word_len"] = list(corpus.spec.word_len)
    return {
        "format_version": FORMAT_VERSION,
        "spec": spec_dict,
        "labels": corpus.labels,
        "pages": [
            {
                "page_id": pid,
                "book_id": corpus.books[pid],
                "width": int(corpus.pages[pid].shape[1]),
                "height": int(corpus.pages[pid].shape[0]),
                "file": f"pages/{pid}.pgm",
                "lines": [
                    {"line_idx": i, "top": b.top, "bottom": b.bottom}
                    for i, b in enumerate(corpus.lines[pid])
                ],
            }
            for pid in sorted(corpus.pages)
        ],
        "instances": [
            {
                "zone_id": w.zone.zone_id,
                "label": w.label,
                "class_idx": w.class_idx,
                "instance_idx": w.instance_idx,
                "style": w.style,
                "page_id": w.zone.page_id,
                "line_idx": w.zone.line_idx,
                "x": w.zone.x,
                "y": w.zone.y,
                "w": w.zone.w,
                "h": w.zone.h,
                "file": f"words/{w.class_idx:03d}_{w.instance_idx:03d}.pgm",
            }
            for w in corpus.instances
        ],
    }


def corpus_digest(corpus: SyntheticCorpus) -> str:
    """Content hash over the manifest and every instance image."""
    digest = hashlib.sha256()
    digest.update(
        json.dumps(_manifest(corpus), sort_keys=True, separators=(",", ":")).encode()
    )
    for w in corpus.instances:
        digest.update(_pgm_bytes(mask_to_gray(w.mask)))
    for pid in sorted(corpus.pages):
        digest.update(_pgm_bytes(mask_to_gray(corpus.pages[pid])))
    return digest.hexdigest()


def write_corpus(corpus: SyntheticCorpus, root: str | Path) -> Path:
    root = Path(root)
    (root / "pages").mkdir(parents=True, exist_ok=True)
    (root / "words").mkdir(parents=True, exist_ok=True)
    manifest = _manifest(corpus)
    (root / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    for rec, w in zip(manifest["instances"], corpus.instances):
        save_pgm(root / rec["file"], mask_to_gray(w.mask))
    for pid in sorted(corpus.pages):
        save_pgm(root / "pages" / f"{pid}.pgm", mask_to_gray(corpus.pages[pid]))
    return root


def load_corpus(root: str | Path) -> SyntheticCorpus:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise MigrationError(
            f"corpus format {version} != supported {FORMAT_VERSION}"
        )
    spec_dict = dict(manifest["spec"])
    spec_dict["word_len"] = tuple(spec_dict["word_len"])
    spec = CorpusSpec(**spec_dict)
    corpus = SyntheticCorpus(spec=spec, labels=list(manifest["labels"]), instances=[])
    for rec in manifest["instances"]:
        zone = WordZone(
            zone_id=rec["zone_id"],
            page_id=rec["page_id"],
            line_idx=rec["line_idx"],
            x=rec["x"],
            y=rec["y"],
            w=rec["w"],
            h=rec["h"],
            source="corpus",
        )
        corpus.instances.append(
            WordInstance(
                label=rec["label"],
                class_idx=rec["class_idx"],
                instance_idx=rec["instance_idx"],
                style=rec["style"],
                mask=binarize(load_pgm(root / rec["file"])),
                zone=zone,
            )
        )
    for prec in manifest["pages"]:
        pid = prec["page_id"]
        corpus.pages[pid] = binarize(load_pgm(root / prec["file"]))
        corpus.books[pid] = prec["book_id"]
        corpus.lines[pid] = [
            LineBand(page_id=pid, top=l["top"], bottom=l["bottom"])
            for l in prec["lines"]
        ]
    return corpus


def corpus_features(
    corpus: SyntheticCorpus,
    k: int = 32,
    patch: PatchConfig | None = None,
    seed: int = 0,
    max_sample: int = 50_000,
) -> tuple[Codebook, dict[str, FeatureVector]]:
    """One codebook over all instances plus a histogram per zone."""
    patch = patch or PatchConfig()
    descriptors = []
    for w in corpus.instances:
        descriptors.extend(extract_descriptors(w.mask, patch))
    codebook = build_codebook(descriptors, k=k, config=patch, seed=seed, max_sample=max_sample)
    features = {
        w.zone.zone_id: quantize(w.mask, codebook, patch, zone_id=w.zone.zone_id)
        for w in corpus.instances
    }
    return codebook, features


def holdout_split(
    corpus: SyntheticCorpus, test_per_class: int, seed: int
) -> tuple[list[WordInstance], list[WordInstance]]:
    """Deterministic per-class train/test partition of instances."""
    if test_per_class >= corpus.spec.per_class:
        raise ParameterError("test_per_class must leave training instances")
    rng = np.random.default_rng([seed, _HOLDOUT_STREAM])
    train: list[WordInstance] = []
    test: list[WordInstance] = []
    by_class: dict[int, list[WordInstance]] = {}
    for w in corpus.instances:
        by_class.setdefault(w.class_idx, []).append(w)
    for c in sorted(by_class):
        group = sorted(by_class[c], key=lambda w: w.instance_idx)
        picks = set(
            rng.choice(len(group), size=test_per_class, replace=False).tolist()
        )
        for i, w in enumerate(group):
            (test if i in picks else train).append(w)
    return train, test


def prepare_engine(
    corpus: SyntheticCorpus,
    engine_config=None,
    k: int = 32,
    patch: PatchConfig | None = None,
    test_per_class: int = 6,
    seed: int = 0,
):
    """Load a corpus into a fresh engine, holding out a test split.

    Returns (engine, truth, test_set): truth maps labelable zone ids to
    their ground-truth labels; test_set pairs held-out feature vectors with
    labels and never enters the engine's candidate pool.
    """
    from .harvest import Engine, EngineConfig

    patch = patch or PatchConfig()
    codebook, features = corpus_features(corpus, k=k, patch=patch, seed=seed)
    train, test = holdout_split(corpus, test_per_class=test_per_class, seed=seed)

    engine = Engine(config=engine_config or EngineConfig())
    engine.set_codebook(codebook, patch)
    for pid in sorted(corpus.pages):
        engine.add_page(
            pid,
            book_id=corpus.books[pid],
            image=mask_to_gray(corpus.pages[pid]),
            lines=corpus.lines[pid],
        )
    truth: dict[str, str] = {}
    for w in train:
        engine.add_zone(w.zone, features[w.zone.zone_id], image=w.mask)
        truth[w.zone.zone_id] = w.label
    test_set = [(features[w.zone.zone_id].histogram, w.label) for w in test]
    return engine, truth, test_set

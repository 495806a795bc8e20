"""Label-count-adaptive classifier cascade and capacity rule of thumb.

The number of human labels for a class decides which model family is
trained: nothing at zero labels, nearest neighbor at one, nearest centroid
for a handful, a linear SVM for tens, and a pluggable slot once hundreds
are available. Classes below the augmentation threshold are padded with
elastic-morph variants of their own zone images.
"""

from __future__ import annotations

import unicodedata
import zlib
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NotTrainedError, ParameterError
from .features import Codebook, FeatureVector, PatchConfig, kmeans, quantize
from .imaging import MorphParams, elastic_morph

__all__ = [
    "Regime",
    "ClassId",
    "Sample",
    "ClassModel",
    "TrainConfig",
    "CapacityQuery",
    "SplitReport",
    "normalize_label",
    "select_ballpark",
    "train_class",
    "classify",
    "select_model",
    "capacity_estimate",
    "split_class_experiment",
    "StyleModel",
    "fit_style",
    "train_linear_svm",
]


class Regime(Enum):
    ZERO_LABEL = "ZeroLabel"
    ONE_NN = "OneNN"
    NEAREST_CENTROID = "NearestCentroid"
    SVM = "Svm"
    DEEP_ELIGIBLE = "DeepEligible"


# inclusive label-count interval per regime; these partition the naturals
REGIME_BOUNDS: dict[Regime, tuple[int, int | None]] = {
    Regime.ZERO_LABEL: (0, 0),
    Regime.ONE_NN: (1, 1),
    Regime.NEAREST_CENTROID: (2, 19),
    Regime.SVM: (20, 100),
    Regime.DEEP_ELIGIBLE: (101, None),
}


def select_ballpark(n_labels: int) -> Regime:
    """Map a labeled-sample count to its classifier regime."""
    if n_labels < 0:
        raise ParameterError("label count must be >= 0")
    for regime, (lo, hi) in REGIME_BOUNDS.items():
        if n_labels >= lo and (hi is None or n_labels <= hi):
            return regime
    raise AssertionError("regime intervals must tile the naturals")


def normalize_label(label: str) -> str:
    """Canonical class key: NFC normalization plus whitespace trim."""
    return unicodedata.normalize("NFC", label).strip()


@dataclass(frozen=True)
class ClassId:
    label: str
    class_key: str

    @classmethod
    def from_label(cls, label: str) -> "ClassId":
        key = normalize_label(label)
        if not key:
            raise DomainError("label must be non-empty")
        return cls(label=label, class_key=key)


@dataclass(frozen=True)
class Sample:
    """One labeled (or synthesized) training instance of a class."""

    zone_id: str
    feature: FeatureVector
    class_key: str
    provenance: str = "new"  # new | confirmed | synthetic

    @property
    def is_human(self) -> bool:
        return self.provenance in ("new", "confirmed")


@dataclass
class ClassModel:
    """Per-class trained model; the payload matches the regime tag."""

    class_key: str
    regime: Regime
    n_labels: int
    version: int = 1
    exemplars: np.ndarray | None = None  # (m, dim), OneNN
    centroid: np.ndarray | None = None
    variance: np.ndarray | None = None
    svm_w: np.ndarray | None = None
    svm_b: float | None = None
    style: str | None = None

    @property
    def trained(self) -> bool:
        return self.regime is not Regime.ZERO_LABEL

    def dim(self) -> int | None:
        for arr in (self.exemplars, self.centroid, self.svm_w):
            if arr is not None:
                return int(arr.shape[-1])
        return None


@dataclass
class TrainConfig:
    """Everything train_class needs beyond the samples themselves."""

    augment_target: int = 20
    augment_amplitude: float = 1.5
    augment_smoothness: float = 3.0
    image_provider: Callable[[str], np.ndarray | None] | None = None
    codebook: Codebook | None = None
    patch_config: PatchConfig = field(default_factory=PatchConfig)
    pool_variance: np.ndarray | None = None
    variance_floor_scale: float = 1e-6
    svm_c: float = 1.0
    svm_epochs: int = 400
    svm_seed: int = 0
    negative_ratio: int = 10
    seed: int = 0
    deep_trainer: Callable[..., tuple[np.ndarray, float]] | None = None

    def variance_floor(self) -> float:
        if self.pool_variance is not None:
            pool_mean = float(np.mean(self.pool_variance))
            if pool_mean > 0:
                return self.variance_floor_scale * pool_mean
        return self.variance_floor_scale


def _feature_matrix(samples: Sequence[Sample]) -> np.ndarray:
    dims = {s.feature.dim for s in samples}
    if len(dims) > 1:
        raise DomainError(f"inconsistent feature dimensions {sorted(dims)}")
    return np.stack([s.feature.histogram for s in samples])


def _augment(samples: list[Sample], class_key: str, config: TrainConfig) -> list[Sample]:
    """Morph source zone images until the effective set reaches the target."""
    if config.image_provider is None or config.codebook is None:
        return []
    originals = [s for s in samples if s.provenance != "synthetic"]
    need = config.augment_target - len(samples)
    variants: list[Sample] = []
    attempts = 0
    i = 0
    while len(variants) < need and attempts < need * 10:
        src = originals[i % len(originals)]
        i += 1
        attempts += 1
        img = config.image_provider(src.zone_id)
        if img is None:
            continue
        seed = (config.seed * 1_000_003 + i) ^ zlib.crc32(src.zone_id.encode())
        params = MorphParams(
            amplitude=config.augment_amplitude,
            smoothness=config.augment_smoothness,
            seed=seed,
        )
        morphed = elastic_morph(img, params)
        fv = quantize(
            morphed,
            config.codebook,
            config.patch_config,
            zone_id=f"{src.zone_id}~aug{i}",
        )
        if fv.empty:
            continue
        variants.append(
            Sample(zone_id=fv.zone_id, feature=fv, class_key=class_key, provenance="synthetic")
        )
    return variants


def train_linear_svm(
    x_pos: np.ndarray,
    x_neg: np.ndarray,
    c: float = 1.0,
    seed: int = 0,
    max_epochs: int = 400,
    tol: float = 1e-10,
) -> tuple[np.ndarray, float]:
    """L2-regularized L1-loss linear SVM by dual coordinate descent.

    The bias is folded in as a constant feature, so the dual is a pure box
    constraint. Deterministic for a fixed seed.
    """
    x = np.vstack([x_pos, x_neg]).astype(np.float64)
    y = np.concatenate([np.ones(len(x_pos)), -np.ones(len(x_neg))])
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    n = xb.shape[0]
    q_ii = np.sum(xb * xb, axis=1)
    alpha = np.zeros(n)
    w = np.zeros(xb.shape[1])
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        max_change = 0.0
        for i in rng.permutation(n):
            g = y[i] * (w @ xb[i]) - 1.0
            a_old = alpha[i]
            a_new = min(max(a_old - g / q_ii[i], 0.0), c)
            if a_new != a_old:
                w += (a_new - a_old) * y[i] * xb[i]
                alpha[i] = a_new
                max_change = max(max_change, abs(a_new - a_old))
        if max_change < tol:
            break
    return w[:-1], float(w[-1])


def _sample_negatives(
    negatives: Sequence[Sample], n_pos: int, config: TrainConfig
) -> np.ndarray:
    pool = _feature_matrix(negatives)
    cap = config.negative_ratio * max(n_pos, 1)
    if pool.shape[0] > cap:
        rng = np.random.default_rng(config.svm_seed)
        pool = pool[rng.choice(pool.shape[0], size=cap, replace=False)]
    return pool


def train_class(
    samples: Sequence[Sample],
    config: TrainConfig,
    negatives: Sequence[Sample] | None = None,
    class_key: str | None = None,
) -> ClassModel:
    """Train the regime-appropriate model for one class.

    The regime follows the human-label count; classes below the augmentation
    target are padded with elastic-morph variants (flagged synthetic) when a
    zone-image source is configured.
    """
    samples = list(samples)
    keys = {s.class_key for s in samples}
    if len(keys) > 1:
        raise DomainError(f"samples span multiple classes {sorted(keys)}")
    if class_key is None:
        if not keys:
            raise DomainError("class_key required for an empty sample set")
        class_key = keys.pop()
    n_human = sum(1 for s in samples if s.is_human)
    regime = select_ballpark(n_human)
    if regime is Regime.ZERO_LABEL:
        return ClassModel(class_key=class_key, regime=regime, n_labels=0)

    effective = list(samples)
    if n_human < config.augment_target:
        effective += _augment(effective, class_key, config)
    x = _feature_matrix(effective)
    model = ClassModel(class_key=class_key, regime=regime, n_labels=n_human)

    if regime is Regime.ONE_NN:
        model.exemplars = x
        return model

    if regime is Regime.NEAREST_CENTROID:
        model.centroid = x.mean(axis=0)
        var = x.var(axis=0)
        if config.pool_variance is not None:
            lam = 1.0 / (x.shape[0] + 1)
            var = (1.0 - lam) * var + lam * config.pool_variance
        model.variance = np.maximum(var, config.variance_floor())
        return model

    # SVM regime, also the default filling of the deep-eligible slot
    if negatives is None or len(negatives) == 0:
        raise DomainError("SVM training requires a negative pool")
    x_neg = _sample_negatives(negatives, x.shape[0], config)
    if regime is Regime.DEEP_ELIGIBLE and config.deep_trainer is not None:
        w, b = config.deep_trainer(x, x_neg, config)
    else:
        w, b = train_linear_svm(
            x, x_neg, c=config.svm_c, seed=config.svm_seed, max_epochs=config.svm_epochs
        )
    model.svm_w = w
    model.svm_b = b
    return model


def _logistic(z: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def score_feature(model: ClassModel, x: np.ndarray) -> float:
    """Classification score of a feature under one model (higher is better)."""
    if model.regime is Regime.ONE_NN:
        d = np.linalg.norm(model.exemplars - x[None, :], axis=1)
        return float(-np.min(d))
    if model.regime is Regime.NEAREST_CENTROID:
        z = (x - model.centroid) ** 2 / model.variance
        return float(-np.sqrt(np.sum(z)))
    if model.regime in (Regime.SVM, Regime.DEEP_ELIGIBLE):
        return float(_logistic(model.svm_w @ x + model.svm_b))
    raise NotTrainedError(f"no model for class {model.class_key}")


def classify(
    x: FeatureVector | np.ndarray,
    models: Sequence[ClassModel],
    top_n: int = 5,
) -> list[tuple[str, float]]:
    """Ranked label hypotheses for one feature vector.

    Scores are per-model (see score_feature); ties break by class_key so the
    ordering is deterministic and independent of model list order.
    """
    if not models:
        raise ParameterError("models must be non-empty")
    vec = x.histogram if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    scored = [
        (m.class_key, score_feature(m, vec))
        for m in models
        if m.trained
    ]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return scored[:top_n]


@dataclass(frozen=True)
class StyleModel:
    """Diagonal Gaussian over a style's global feature statistics."""

    style: str
    mean: np.ndarray
    variance: np.ndarray

    def log_likelihood(self, x: np.ndarray) -> float:
        v = np.maximum(self.variance, 1e-12)
        return float(
            -0.5 * np.sum((x - self.mean) ** 2 / v + np.log(2.0 * np.pi * v))
        )


def fit_style(style: str, features: np.ndarray, floor: float = 1e-9) -> StyleModel:
    features = np.asarray(features, dtype=np.float64)
    return StyleModel(
        style=style,
        mean=features.mean(axis=0),
        variance=np.maximum(features.var(axis=0), floor),
    )


def select_model(
    x: FeatureVector | np.ndarray,
    conditioned: Sequence[tuple[Sequence[ClassModel], str, float]],
) -> Sequence[ClassModel]:
    """Pick the model set whose style most plausibly generated the sample.

    Classification should then run only inside the winning set. Scaling all
    likelihoods by a positive constant cannot change the outcome.
    """
    if not conditioned:
        raise ParameterError("need at least one candidate model set")
    best = max(range(len(conditioned)), key=lambda i: conditioned[i][2])
    return conditioned[best][0]


@dataclass(frozen=True)
class CapacityQuery:
    weights: int
    dropout_p: float | str | Fraction = 0
    samples_per_coeff: int = 5

    def __post_init__(self):
        if self.weights < 0:
            raise ParameterError("weights must be >= 0")
        p = _as_fraction(self.dropout_p)
        if not 0 <= p < 1:
            raise ParameterError("dropout_p must be in [0, 1)")


def _as_fraction(p: float | str | Fraction) -> Fraction:
    if isinstance(p, Fraction):
        return p
    # str() of a float gives its shortest decimal form, so user-entered
    # probabilities like 0.8 stay the exact rational 4/5
    return Fraction(str(p))


def capacity_estimate(q: CapacityQuery) -> int:
    """Required labeled samples: samples_per_coeff x weights x (1 - dropout).

    Exact rational arithmetic, rounded down to an integer.
    """
    p = _as_fraction(q.dropout_p)
    total = Fraction(q.samples_per_coeff) * Fraction(q.weights) * (1 - p)
    return int(total)  # Fraction -> int truncates toward zero; total >= 0 so this is floor


@dataclass(frozen=True)
class SplitReport:
    lumped_accuracy: float
    split_accuracy: float
    n: int
    n_half: tuple[int, int]


def _accuracy(
    eval_set: Sequence[Sample],
    models: Sequence[ClassModel],
    remap: dict[str, str] | None = None,
) -> float:
    correct = 0
    for s in eval_set:
        pred = classify(s.feature, models, top_n=1)[0][0]
        if remap:
            pred = remap.get(pred, pred)
        if pred == s.class_key:
            correct += 1
    return correct / len(eval_set)


def split_class_experiment(
    samples: Sequence[Sample],
    negatives: Sequence[Sample],
    eval_set: Sequence[Sample],
    config: TrainConfig,
) -> SplitReport:
    """Compare one lumped model against two k-means subclass models.

    The split scheme counts a prediction as correct when either subclass
    label maps back to the original class. Both schemes are evaluated
    against the same competitor models trained from the negatives.
    """
    samples = list(samples)
    n = len(samples)
    if n < 4:
        raise ParameterError("need at least 4 samples to compare schemes")
    class_key = samples[0].class_key

    by_class: dict[str, list[Sample]] = {}
    for s in negatives:
        by_class.setdefault(s.class_key, []).append(s)
    competitors = []
    for key, group in sorted(by_class.items()):
        rest = [s for s in negatives if s.class_key != key] + samples
        competitors.append(train_class(group, config, negatives=rest, class_key=key))

    lumped = train_class(samples, config, negatives=negatives, class_key=class_key)
    lumped_acc = _accuracy(eval_set, [lumped] + competitors)

    x = _feature_matrix(samples)
    _, labels, _ = kmeans(x, k=2, seed=config.seed)
    halves = [
        [s for s, l in zip(samples, labels) if l == 0],
        [s for s, l in zip(samples, labels) if l == 1],
    ]
    split_models = []
    remap = {}
    for idx, half in enumerate(halves):
        sub_key = f"{class_key}~split{idx}"
        half = [
            Sample(s.zone_id, s.feature, sub_key, s.provenance) for s in half
        ]
        other = [s for s in negatives] + [
            Sample(s.zone_id, s.feature, f"{class_key}~split{1 - idx}", s.provenance)
            for s in halves[1 - idx]
        ]
        split_models.append(train_class(half, config, negatives=other, class_key=sub_key))
        remap[sub_key] = class_key
    split_acc = _accuracy(eval_set, split_models + competitors, remap=remap)

    return SplitReport(
        lumped_accuracy=lumped_acc,
        split_accuracy=split_acc,
        n=n,
        n_half=(len(halves[0]), len(halves[1])),
    )

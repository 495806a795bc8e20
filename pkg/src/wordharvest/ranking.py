"""Hit-list ranking, FRR/FAR uncertainty curves, and prospect scoring.

Candidates for a class are ranked by the class-conditional score p(x|C),
never by a posterior renormalized across classes, so scores from different
classes are not comparable and are never mixed. The FAR side of the curve
pair is "presumed": residual-pool candidates are unlabeled, so acceptances
there are only presumed false.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ballpark import ClassModel, Regime, Sample
from .errors import DomainError, NotTrainedError, ParameterError
from .features import FeatureVector

__all__ = [
    "HitList",
    "HitEntry",
    "UncertaintyCurves",
    "Prospect",
    "hit_score",
    "rank_hitlist",
    "uncertainty_curves",
    "labeling_effect",
    "LabelingEffect",
    "prospect_score",
    "near_boundary_count",
]


@dataclass(frozen=True)
class HitEntry:
    zone_id: str
    score: float
    already_labeled: bool = False


@dataclass(frozen=True)
class HitList:
    class_key: str
    entries: tuple[HitEntry, ...]
    model_version: int
    generated_at: float

    def to_json(self) -> dict:
        return {
            "class_key": self.class_key,
            "model_version": self.model_version,
            "entries": [
                {"zone_id": e.zone_id, "score": e.score, "labeled": e.already_labeled}
                for e in self.entries
            ],
        }


@dataclass(frozen=True)
class UncertaintyCurves:
    """FRR/FAR sweep for one class plus the interpolated crossing."""

    class_key: str
    thresholds: np.ndarray  # sorted distinct observed scores
    frr: np.ndarray
    far_presumed: np.ndarray
    eur: float
    eur_threshold: float
    positive_scores: np.ndarray = field(repr=False, default=None)
    residual_scores: np.ndarray = field(repr=False, default=None)

    def far_at(self, t: float) -> float:
        """Exact step-function FAR: fraction of residual scores >= t."""
        return float(np.mean(self.residual_scores >= t))

    def frr_at(self, t: float) -> float:
        return float(np.mean(self.positive_scores < t))

    def to_json(self) -> dict:
        return {
            "class_key": self.class_key,
            "thresholds": self.thresholds.tolist(),
            "frr": self.frr.tolist(),
            "far": self.far_presumed.tolist(),
            "eur": self.eur,
            "eur_threshold": self.eur_threshold,
        }


@dataclass(frozen=True)
class Prospect:
    class_key: str
    score: float
    components: dict


def _log_gaussian(x: np.ndarray, mean: np.ndarray, variance: np.ndarray) -> float:
    return float(-0.5 * np.sum((x - mean) ** 2 / variance + np.log(2.0 * np.pi * variance)))


def hit_score(model: ClassModel, x: np.ndarray) -> float:
    """Class-conditional score of one candidate under one class's model.

    NearestCentroid uses the full diagonal-Gaussian log-density; OneNN the
    negative distance to the nearest exemplar; Svm the logistic of the
    decision value. Only ordering within the class matters.
    """
    if model.regime is Regime.ONE_NN:
        return float(-np.min(np.linalg.norm(model.exemplars - x[None, :], axis=1)))
    if model.regime is Regime.NEAREST_CENTROID:
        return _log_gaussian(x, model.centroid, model.variance)
    if model.regime in (Regime.SVM, Regime.DEEP_ELIGIBLE):
        z = float(model.svm_w @ x + model.svm_b)
        return float(1.0 / (1.0 + math.exp(-min(max(z, -500.0), 500.0))))
    raise NotTrainedError(f"no model for class {model.class_key}")


def rank_hitlist(
    model: ClassModel,
    pool: Sequence[FeatureVector],
    limit: int,
    labeled_zones: frozenset[str] | set[str] = frozenset(),
) -> HitList:
    """Top candidates for one class, best first, ties broken by zone_id."""
    if not pool:
        raise ParameterError("candidate pool must be non-empty")
    if limit < 1:
        raise ParameterError("limit must be >= 1")
    if not model.trained:
        raise NotTrainedError(f"no model for class {model.class_key}")
    scored = [(fv.zone_id, hit_score(model, fv.histogram)) for fv in pool]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    entries = tuple(
        HitEntry(zone_id=z, score=s, already_labeled=z in labeled_zones)
        for z, s in scored[:limit]
    )
    return HitList(
        class_key=model.class_key,
        entries=entries,
        model_version=model.version,
        generated_at=time.time(),
    )


def uncertainty_curves(
    model: ClassModel,
    positives: Sequence[Sample],
    residual_scores: Sequence[float] | np.ndarray,
) -> UncertaintyCurves:
    """FRR/FAR threshold sweep with the interpolated equal-rate crossing.

    FRR(t) is the fraction of labeled positives scoring below t; FAR(t) the
    fraction of the residual pool scoring at or above t. The crossing is
    bracketed by sentinel thresholds outside the score range, so it always
    exists, and is linearly interpolated when it falls between grid points.
    """
    humans = [s for s in positives if s.provenance != "synthetic"]
    assert len(humans) == len(positives), "synthetic samples must not enter FRR"
    if len(humans) < 2:
        raise DomainError("curves undefined: need >= 2 labeled positives")
    residual = np.asarray(residual_scores, dtype=np.float64)
    if residual.size == 0:
        raise DomainError("curves undefined: empty residual pool")
    pos = np.array([hit_score(model, s.feature.histogram) for s in humans])
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(residual))):
        raise DomainError("scores must be finite")

    thresholds = np.unique(np.concatenate([pos, residual]))
    grid = np.concatenate([[thresholds[0] - 1.0], thresholds, [thresholds[-1] + 1.0]])
    frr_g = np.mean(pos[None, :] < grid[:, None], axis=1)
    far_g = np.mean(residual[None, :] >= grid[:, None], axis=1)
    d = frr_g - far_g  # -1 at the low sentinel, +1 at the high one

    i = int(np.argmax(d >= 0))
    if d[i] == 0.0:
        eur = float(frr_g[i])
        eur_threshold = float(grid[i])
    else:
        lam = -d[i - 1] / (d[i] - d[i - 1])
        eur = float(frr_g[i - 1] + lam * (frr_g[i] - frr_g[i - 1]))
        eur_threshold = float(grid[i - 1] + lam * (grid[i] - grid[i - 1]))

    return UncertaintyCurves(
        class_key=model.class_key,
        thresholds=thresholds,
        frr=frr_g[1:-1],
        far_presumed=far_g[1:-1],
        eur=eur,
        eur_threshold=eur_threshold,
        positive_scores=pos,
        residual_scores=residual,
    )


@dataclass(frozen=True)
class LabelingEffect:
    delta_far_at_old_eur_threshold: float
    delta_eur: float


def labeling_effect(before: UncertaintyCurves, after: UncertaintyCurves) -> LabelingEffect:
    """Change in FAR at the old operating point after retraining.

    A negative delta_far means the FAR curve got steeper around the old
    threshold: fewer presumed negatives are admitted, the desired effect of
    adding labels.
    """
    if before.class_key != after.class_key:
        raise DomainError("curves compare only within one class")
    t = before.eur_threshold
    return LabelingEffect(
        delta_far_at_old_eur_threshold=after.far_at(t) - before.far_at(t),
        delta_eur=after.eur - before.eur,
    )


def near_boundary_count(curves: UncertaintyCurves) -> int:
    """Residual candidates at or above the EUR threshold: harvestable mass."""
    return int(np.sum(curves.residual_scores >= curves.eur_threshold))


def prospect_score(
    curves: UncertaintyCurves,
    near_boundary: int,
    label_velocity: float,
    velocity_cap: float = 10.0,
) -> Prospect:
    """Where is the labeling action: eur x ln(1 + pool) x (1 + velocity).

    Zero when the class is saturated (eur 0) or mined out (empty boundary
    pool); monotone non-decreasing in every component.
    """
    if near_boundary < 0:
        raise ParameterError("near_boundary must be >= 0")
    if label_velocity < 0:
        raise ParameterError("label_velocity must be >= 0")
    if velocity_cap <= 0:
        raise ParameterError("velocity_cap must be > 0")
    velocity_norm = min(1.0, label_velocity / velocity_cap)
    score = curves.eur * math.log1p(near_boundary) * (1.0 + velocity_norm)
    return Prospect(
        class_key=curves.class_key,
        score=score,
        components={
            "eur": curves.eur,
            "near_boundary_count": near_boundary,
            "label_velocity": label_velocity,
        },
    )

"""Patch descriptors, k-means codebooks, and bag-of-visual-words vectors.

A zone image is described by a histogram over a learned codebook of raw
normalized patches. The same k-means primitive also serves the class
splitting experiment with k=2.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigMismatchError, DomainError, ParameterError

__all__ = [
    "PatchConfig",
    "PatchDescriptor",
    "Codebook",
    "FeatureVector",
    "extract_descriptors",
    "kmeans",
    "build_codebook",
    "quantize",
]


@dataclass(frozen=True)
class PatchConfig:
    """Dense-grid extraction settings; its hash binds codebooks to features."""

    patch: int = 8
    stride: int = 4
    norm: str = "l1"

    def config_hash(self) -> str:
        key = f"patch={self.patch},stride={self.stride},norm={self.norm}"
        return hashlib.sha1(key.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PatchDescriptor:
    values: np.ndarray
    origin: tuple[int, int]  # (x, y) in zone coordinates


@dataclass(frozen=True)
class Codebook:
    k: int
    centroids: np.ndarray  # (k, dim)
    config_hash: str
    seed: int

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


@dataclass(frozen=True)
class FeatureVector:
    zone_id: str
    histogram: np.ndarray
    norm: str = "l1"
    empty: bool = False

    @property
    def dim(self) -> int:
        return int(self.histogram.shape[0])


def extract_descriptors(
    zone: np.ndarray, config: PatchConfig = PatchConfig()
) -> list[PatchDescriptor]:
    """Dense patch grid over a zone mask, keeping patches that contain ink.

    Descriptors are flattened patches, mean subtracted and scaled to unit L2
    norm; constant patches carry no shape information and are dropped.
    """
    zone = np.asarray(zone, dtype=bool)
    p, s = config.patch, config.stride
    if p <= 0 or s <= 0:
        raise ParameterError("patch and stride must be positive")
    h, w = zone.shape if zone.ndim == 2 else (0, 0)
    if h < p or w < p:
        return []
    out = []
    for y in range(0, h - p + 1, s):
        for x in range(0, w - p + 1, s):
            tile = zone[y : y + p, x : x + p]
            if not tile.any() or tile.all():
                continue
            v = tile.astype(np.float64).ravel()
            v -= v.mean()
            n = np.linalg.norm(v)
            if n == 0:
                continue
            out.append(PatchDescriptor(values=v / n, origin=(x, y)))
    return out


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = points[rng.integers(n)]
        else:
            centroids[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; argmin returns the lowest index on ties
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def _inertia(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum((points - centroids[labels]) ** 2))


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's k-means with k-means++ seeding.

    Runs to an assignment fixpoint or max_iter; empty clusters are reseeded
    to the point farthest from its centroid. Deterministic for fixed inputs.
    Returns (centroids, labels, inertia history); the history is
    non-increasing, which the caller may assert.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ParameterError("points must be a non-empty 2-D array")
    n = points.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"k={k} needs between 1 and {n} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    labels = _assign(points, centroids)
    history = [_inertia(points, centroids, labels)]
    for _ in range(max_iter):
        new_centroids = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if members.shape[0] == 0:
                far = int(np.argmax(np.sum((points - centroids[labels]) ** 2, axis=1)))
                new_centroids[j] = points[far]
            else:
                new_centroids[j] = members.mean(axis=0)
        new_labels = _assign(points, new_centroids)
        centroids = new_centroids
        history.append(_inertia(points, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return centroids, labels, history


def build_codebook(
    descriptors: list[PatchDescriptor] | np.ndarray,
    k: int,
    config: PatchConfig,
    seed: int = 0,
    max_iter: int = 100,
    max_sample: int | None = None,
) -> Codebook:
    """Cluster descriptors into a codebook bound to the extraction config."""
    if isinstance(descriptors, np.ndarray):
        points = descriptors.astype(np.float64)
    else:
        if len(descriptors) == 0:
            raise DomainError("no descriptors to cluster")
        points = np.stack([d.values for d in descriptors])
    if points.shape[0] < k:
        raise ParameterError(f"need at least k={k} descriptors, got {points.shape[0]}")
    if max_sample is not None and points.shape[0] > max_sample:
        rng = np.random.default_rng(seed)
        points = points[rng.choice(points.shape[0], size=max_sample, replace=False)]
    centroids, _, _ = kmeans(points, k, seed=seed, max_iter=max_iter)
    return Codebook(k=k, centroids=centroids, config_hash=config.config_hash(), seed=seed)


def quantize(
    zone: np.ndarray,
    codebook: Codebook,
    config: PatchConfig = PatchConfig(),
    zone_id: str = "",
) -> FeatureVector:
    """Histogram of nearest-centroid assignments for a zone's descriptors.

    A zone with no descriptors yields the designated empty vector: all
    zeros, flagged empty.
    """
    if codebook.config_hash != config.config_hash():
        raise ConfigMismatchError(
            f"codebook built for config {codebook.config_hash}, "
            f"got {config.config_hash()}"
        )
    descriptors = extract_descriptors(zone, config)
    hist = np.zeros(codebook.k, dtype=np.float64)
    if not descriptors:
        return FeatureVector(zone_id=zone_id, histogram=hist, norm=config.norm, empty=True)
    points = np.stack([d.values for d in descriptors])
    labels = _assign(points, codebook.centroids)
    np.add.at(hist, labels, 1.0)
    if config.norm == "l1":
        hist /= hist.sum()
    elif config.norm == "l2":
        hist /= np.linalg.norm(hist)
    else:
        raise ParameterError(f"unknown norm {config.norm!r}")
    return FeatureVector(zone_id=zone_id, histogram=hist, norm=config.norm, empty=False)

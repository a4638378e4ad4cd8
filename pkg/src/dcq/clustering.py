"""First-level partition of a dataset into chromaticity clusters.

Feature vectors come either from the built-in RGB histogram extractor or
from a DCQF file written by an external feature exporter. Clustering is
Lloyd's algorithm with k-means++ seeding on a seeded PCG64 generator, so a
(inputs, seed) pair pins every result bit-for-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .color import require_image_shape

DCQF_MAGIC = b"DCQF"
DCQF_VERSION = 1

DEFAULT_CLUSTERS = 20
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-4


class FormatError(ValueError):
    """A binary container failed to parse."""


@dataclass
class ClusterModel:
    """Result of k-means: centroids plus the per-image assignment."""

    k: int
    centroids: np.ndarray          # (k, D) float64
    assignments: np.ndarray        # (N,) int64, each in [0, k)
    inertia: float                 # sum of squared distances to assigned centroids
    seed: int
    inertia_history: list = field(default_factory=list)  # per Lloyd iteration


def color_histogram_features(image: np.ndarray) -> np.ndarray:
    """48-dim feature: per-channel 16-bin histograms (bin = value // 16), each L1-normalized."""
    require_image_shape(image)
    pixels = np.asarray(image).reshape(-1, 3)
    n = pixels.shape[0]
    blocks = [
        np.bincount(pixels[:, c] // 16, minlength=16).astype(np.float64) / n
        for c in range(3)
    ]
    return np.concatenate(blocks)


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point (ties to lowest index) and squared distances."""
    d = points[:, None, :] - centroids[None, :, :]
    dist2 = (d * d).sum(axis=2)
    labels = np.argmin(dist2, axis=1)
    return labels, dist2[np.arange(points.shape[0]), labels]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # Remaining points coincide with chosen centroids; duplicates are fine.
            idx = 0
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total))
            idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(points, k: int, seed: int = 0,
           max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL) -> ClusterModel:
    """Seeded k-means++ / Lloyd clustering.

    Stops when the relative inertia improvement between consecutive
    assignment passes drops below `tol`, or after `max_iters` iterations.
    Clusters that empty out are reseeded to the point currently farthest
    from its centroid, so every final cluster is non-empty.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError(f"points must be a non-empty (N, D) array, got {points.shape}")
    if not np.isfinite(points).all():
        raise ValueError("points contain non-finite values")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > points.shape[0]:
        raise ValueError(f"k={k} exceeds the number of points ({points.shape[0]})")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)

    history: list[float] = []
    labels, d2 = _assign(points, centroids)
    inertia = float(d2.sum())
    history.append(inertia)

    for _ in range(max_iters):
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        new_centroids = centroids.copy()
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]

        empties = np.flatnonzero(~nonempty)
        if empties.size:
            # Seed each empty cluster with the next-farthest point.
            order = np.argsort(-d2, kind="stable")
            for rank, c in enumerate(empties):
                new_centroids[c] = points[order[min(rank, points.shape[0] - 1)]]

        centroids = new_centroids
        labels, d2 = _assign(points, centroids)
        new_inertia = float(d2.sum())
        history.append(new_inertia)
        if inertia <= 0.0 or (inertia - new_inertia) / inertia < tol:
            inertia = new_inertia
            break
        inertia = new_inertia

    return ClusterModel(k=k, centroids=centroids, assignments=labels.astype(np.int64),
                        inertia=inertia, seed=seed, inertia_history=history)


def cluster_dataset(features, k: int = DEFAULT_CLUSTERS, seed: int = 0) -> ClusterModel:
    """kmeans with the dataset defaults (max_iters=100, tol=1e-4)."""
    return kmeans(features, k, seed=seed, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL)


def random_clusters(n_images: int, k: int, seed: int = 0) -> ClusterModel:
    """Debug mode: uniform random assignments with centroid placeholders."""
    rng = np.random.default_rng(seed)
    assignments = rng.integers(0, k, size=n_images)
    # Guarantee every cluster is populated so downstream palette building works.
    assignments[:k] = np.arange(k)
    return ClusterModel(k=k, centroids=np.zeros((k, 1)), assignments=assignments.astype(np.int64),
                        inertia=float("nan"), seed=seed)


def write_features(features: np.ndarray, path) -> None:
    """Write an (N, D) float array as a DCQF file."""
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError(f"features must be (N, D), got {features.shape}")
    n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(DCQF_MAGIC)
        fh.write(struct.pack("<BII", DCQF_VERSION, n, d))
        fh.write(features.astype("<f4").tobytes(order="C"))


def load_features(path) -> np.ndarray:
    """Parse a DCQF feature file into an (N, D) float64 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DCQF_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {DCQF_MAGIC!r}")
    if len(blob) < 13:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes, expected >= 13)")
    version, n, d = struct.unpack_from("<BII", blob, 4)
    if version != DCQF_VERSION:
        raise FormatError(f"{path}: unsupported DCQF version {version}")
    expected = 13 + n * d * 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", count=n * d, offset=13)
    out = data.reshape(n, d).astype(np.float64)
    if not np.isfinite(out).all():
        raise FormatError(f"{path}: feature payload contains non-finite values")
    return out

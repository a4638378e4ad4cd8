"""Second-level palette learning: one shared LAB palette per image cluster.

For each cluster, the highest-attention pixels of every member image are
pooled (all pixels when no attention maps are given), optionally subsampled
to a cap, and clustered with k-means into 2^q colors. Palette entries are
ordered by descending cluster population so serialization is canonical.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel, FormatError, kmeans

DCQA_MAGIC = b"DCQA"
DCQA_VERSION = 1

DEFAULT_KGRA = 0.5
DEFAULT_PIXEL_CAP = 100_000


@dataclass
class ClusterPalettes:
    """One LAB palette of 2^q colors per cluster."""

    q: int
    colors: np.ndarray        # (num_clusters, 2^q, 3) float64 LAB
    padded: np.ndarray        # (num_clusters,) bool; True when colors were repeated

    @property
    def num_clusters(self) -> int:
        return self.colors.shape[0]


def select_attention_pixels(lab_image: np.ndarray, attention: np.ndarray,
                            k_gra: float) -> np.ndarray:
    """The ceil(k_gra * H * W) pixels with the highest attention values.

    Ties break by row-major pixel order (earlier pixel wins). Returns an
    (n, 3) LAB array.
    """
    lab_image = np.asarray(lab_image, dtype=np.float64)
    attention = np.asarray(attention, dtype=np.float64)
    if lab_image.shape[:2] != attention.shape:
        raise ValueError(
            f"attention shape {attention.shape} does not match image {lab_image.shape[:2]}")
    if not 0.0 < k_gra <= 1.0:
        raise ValueError(f"k_gra must be in (0, 1], got {k_gra}")
    h, w = attention.shape
    n = math.ceil(k_gra * h * w)
    order = np.argsort(-attention.reshape(-1), kind="stable")
    return lab_image.reshape(-1, 3)[order[:n]]


def subsample_pixels(pixels: np.ndarray, cap: int | None, seed: int) -> np.ndarray:
    """Seeded uniform subsample (without replacement) when over the cap.

    Chosen indices are sorted so the original pixel order is preserved.
    """
    if cap is None or pixels.shape[0] <= cap:
        return pixels
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(pixels.shape[0], size=cap, replace=False))
    return pixels[idx]


def _order_palette(colors: np.ndarray, population: np.ndarray) -> np.ndarray:
    """Canonical entry order: descending population, then ascending L, a, b."""
    keys = np.lexsort((colors[:, 2], colors[:, 1], colors[:, 0], -population))
    return colors[keys]


def build_cluster_palette(pixels: np.ndarray, q: int, seed: int = 0,
                          cap: int | None = DEFAULT_PIXEL_CAP) -> tuple[np.ndarray, bool]:
    """K-means the pooled LAB pixels of one cluster into a 2^q-color palette.

    Returns (palette, padded). When the pixels hold fewer distinct colors
    than 2^q, the distinct colors are repeated cyclically to reach full
    length and `padded` is True.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if pixels.shape[0] == 0:
        raise ValueError("cannot build a palette from zero pixels")
    if not 1 <= q <= 8:
        raise ValueError(f"bit depth q must be in [1, 8], got {q}")
    size = 1 << q
    pixels = subsample_pixels(pixels, cap, seed)

    distinct, counts = np.unique(pixels, axis=0, return_counts=True)
    if distinct.shape[0] < size:
        ordered = _order_palette(distinct, counts)
        reps = -(-size // ordered.shape[0])
        return np.tile(ordered, (reps, 1))[:size], True

    model = kmeans(pixels, k=size, seed=seed)
    population = np.bincount(model.assignments, minlength=size)
    return _order_palette(model.centroids, population), False


def build_all_palettes(lab_images, cluster_model: ClusterModel,
                       attention_maps=None, q: int = 1,
                       k_gra: float = DEFAULT_KGRA, seed: int = 0,
                       cap: int | None = DEFAULT_PIXEL_CAP) -> ClusterPalettes:
    """Shared palette for every cluster of the dataset.

    Member pixels are pooled in ascending image index order. With
    `attention_maps=None` all pixels participate (same as k_gra=1).
    Per-cluster work is seeded with `seed + cluster_index` so clusters can
    be built independently.
    """
    assignments = cluster_model.assignments
    if attention_maps is not None and len(attention_maps) != len(lab_images):
        raise ValueError(
            f"{len(attention_maps)} attention maps for {len(lab_images)} images")

    palettes = np.empty((cluster_model.k, 1 << q, 3), dtype=np.float64)
    padded = np.zeros(cluster_model.k, dtype=bool)
    for c in range(cluster_model.k):
        members = np.flatnonzero(assignments == c)
        if members.size == 0:
            raise ValueError(f"cluster {c} has no member images")
        parts = []
        for i in members:
            img = np.asarray(lab_images[i], dtype=np.float64)
            if attention_maps is None:
                parts.append(img.reshape(-1, 3))
            else:
                parts.append(select_attention_pixels(img, attention_maps[i], k_gra))
        palettes[c], padded[c] = build_cluster_palette(
            np.concatenate(parts), q, seed=seed + c, cap=cap)
    return ClusterPalettes(q=q, colors=palettes, padded=padded)


def write_attention(maps: np.ndarray, path) -> None:
    """Write an (N, H, W) array of [0, 1] values as a DCQA file."""
    maps = np.asarray(maps, dtype=np.float32)
    if maps.ndim != 3:
        raise ValueError(f"attention maps must be (N, H, W), got {maps.shape}")
    if maps.size and (maps.min() < 0.0 or maps.max() > 1.0):
        raise ValueError("attention values must lie in [0, 1]")
    n, h, w = maps.shape
    with open(path, "wb") as fh:
        fh.write(DCQA_MAGIC)
        fh.write(struct.pack("<BIHH", DCQA_VERSION, n, h, w))
        fh.write(maps.astype("<f4").tobytes(order="C"))


def load_attention(path) -> np.ndarray:
    """Parse a DCQA attention file into an (N, H, W) float64 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DCQA_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {DCQA_MAGIC!r}")
    if len(blob) < 13:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes, expected >= 13)")
    version, n, h, w = struct.unpack_from("<BIHH", blob, 4)
    if version != DCQA_VERSION:
        raise FormatError(f"{path}: unsupported DCQA version {version}")
    expected = 13 + n * h * w * 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", count=n * h * w, offset=13)
    maps = data.reshape(n, h, w).astype(np.float64)
    if not np.isfinite(maps).all():
        raise FormatError(f"{path}: attention payload contains non-finite values")
    if maps.size and (maps.min() < 0.0 or maps.max() > 1.0):
        raise FormatError(f"{path}: attention values outside [0, 1]")
    return maps

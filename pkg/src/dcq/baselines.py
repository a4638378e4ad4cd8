"""Classic per-image color quantizers used as evaluation baselines.

All three emit the same (LAB palette of 2^q colors, per-pixel index plane)
shape as the shared-palette pipeline so the evaluation harness stays
quantizer-agnostic. MedianCut and octree are deterministic; per-image
k-means is deterministic given its seed.
"""

from __future__ import annotations

import numpy as np

from .color import require_image_shape, srgb_to_lab
from .palette import _order_palette, build_cluster_palette
from .refine import quantize_hard

BASELINE_METHODS = ("kmeans", "mediancut", "octree")


def _pad_palette(colors: np.ndarray, population: np.ndarray, size: int) -> np.ndarray:
    ordered = _order_palette(colors, population)
    if ordered.shape[0] >= size:
        return ordered[:size]
    reps = -(-size // ordered.shape[0])
    return np.tile(ordered, (reps, 1))[:size]


def per_image_kmeans(image: np.ndarray, q: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """K-means over the image's own LAB pixels with k = 2^q."""
    require_image_shape(image)
    lab = srgb_to_lab(image)
    palette, _ = build_cluster_palette(lab.reshape(-1, 3), q, seed=seed, cap=None)
    _, indices = quantize_hard(lab, palette)
    return palette, indices


def _split_box(pixels: np.ndarray, box: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split one box at the value boundary nearest the median of its longest axis."""
    values = pixels[box]
    extents = values.max(axis=0) - values.min(axis=0)
    axis = int(np.argmax(extents))
    order = np.argsort(values[:, axis], kind="stable")
    sorted_vals = values[order, axis]
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    b = int(boundaries[np.argmin(np.abs(boundaries - len(box) / 2.0))])
    return box[order[:b]], box[order[b:]]


def median_cut(image: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Classic MedianCut in RGB space.

    Repeatedly splits the box with the largest longest-axis extent (ties:
    oldest box) at the median of that axis, snapped to the nearest value
    boundary so identical colors never straddle a split. Box means become
    the palette, converted to LAB, ordered by descending population.
    """
    require_image_shape(image)
    if not 1 <= q <= 8:
        raise ValueError(f"bit depth q must be in [1, 8], got {q}")
    pixels = np.asarray(image, dtype=np.float64).reshape(-1, 3)
    size = 1 << q

    boxes = [np.arange(pixels.shape[0])]
    while len(boxes) < size:
        extents = [float((pixels[b].max(axis=0) - pixels[b].min(axis=0)).max())
                   for b in boxes]
        pick = int(np.argmax(extents))
        if extents[pick] <= 0.0:
            break  # every box is a single color
        lower, upper = _split_box(pixels, boxes[pick])
        boxes[pick] = lower
        boxes.append(upper)

    means = np.array([pixels[b].mean(axis=0) for b in boxes])
    population = np.array([len(b) for b in boxes])
    palette = _pad_palette(srgb_to_lab(means), population, size)
    lab = srgb_to_lab(image)
    _, indices = quantize_hard(lab, palette)
    return palette, indices


def _octree_leaves(pixels: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Initial leaves at depth 8: path code -> (count, sum_r, sum_g, sum_b)."""
    r, g, b = (pixels[:, c].astype(np.uint32) for c in range(3))
    codes = np.zeros(pixels.shape[0], dtype=np.uint32)
    for depth in range(8):
        bit = 7 - depth
        octant = (((r >> bit) & 1) << 2) | (((g >> bit) & 1) << 1) | ((b >> bit) & 1)
        codes = codes * 8 + octant
    leaves: dict[tuple[int, int], np.ndarray] = {}
    uniq, inverse = np.unique(codes, return_inverse=True)
    counts = np.bincount(inverse)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, pixels)
    for i, code in enumerate(uniq):
        leaves[(8, int(code))] = np.array([counts[i], *sums[i]])
    return leaves


def octree_quantize(image: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Octree quantization with a fixed merge order.

    Colors are inserted to depth 8; sibling leaves are then collapsed into
    their parent, deepest level first, least-populated parent first, path
    code as the final tie-break, until at most 2^q leaves remain.
    """
    require_image_shape(image)
    if not 1 <= q <= 8:
        raise ValueError(f"bit depth q must be in [1, 8], got {q}")
    pixels = np.asarray(image, dtype=np.float64).reshape(-1, 3)
    size = 1 << q

    leaves = _octree_leaves(pixels)
    while len(leaves) > size:
        deepest = max(depth for depth, _ in leaves)
        parents: dict[tuple[int, int], np.ndarray] = {}
        for (depth, code), stats in leaves.items():
            if depth == deepest:
                key = (depth - 1, code // 8)
                parents[key] = parents.get(key, np.zeros(4)) + stats
        # Merge in (population, code) order until the budget is met; the
        # outer loop then moves to the next-shallower level.
        for key in sorted(parents, key=lambda k: (parents[k][0], k[1])):
            if len(leaves) <= size:
                break
            for child in range(8):
                leaves.pop((deepest, key[1] * 8 + child), None)
            leaves[key] = parents[key]

    stats = list(leaves.values())
    means = np.array([s[1:] / s[0] for s in stats])
    population = np.array([s[0] for s in stats])
    palette = _pad_palette(srgb_to_lab(means), population, size)
    lab = srgb_to_lab(image)
    _, indices = quantize_hard(lab, palette)
    return palette, indices

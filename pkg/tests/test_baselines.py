import itertools

import numpy as np
import pytest

from dcq.baselines import median_cut, octree_quantize, per_image_kmeans
from dcq.color import srgb_to_lab


def _lab_mse(image, palette, indices):
    lab = srgb_to_lab(image)
    return float(((lab - palette[indices]) ** 2).sum(axis=2).mean())


def _best_bipartition_inertia(colors, counts):
    """Exhaustive weighted 2-partition over the distinct-color set."""
    n = len(colors)
    best = np.inf
    for labels in itertools.product((0, 1), repeat=n):
        labels = np.array(labels)
        total = 0.0
        for part in (0, 1):
            mask = labels == part
            if not mask.any():
                continue
            w = counts[mask].astype(np.float64)
            mean = (colors[mask] * w[:, None]).sum(axis=0) / w.sum()
            total += (w * ((colors[mask] - mean) ** 2).sum(axis=1)).sum()
        best = min(best, total)
    return best


class TestPerImageKmeans:
    def test_exact_fit_with_2q_distinct_colors(self):
        rng = np.random.default_rng(0)
        colors = rng.integers(0, 256, size=(4, 3), dtype=np.uint8)
        image = colors[rng.integers(0, 4, size=(6, 6))]
        palette, indices = per_image_kmeans(image, q=2, seed=1)
        assert _lab_mse(image, palette, indices) <= 1e-18

    def test_solid_image(self):
        image = np.full((4, 4, 3), (120, 40, 200), dtype=np.uint8)
        palette, indices = per_image_kmeans(image, q=2, seed=0)
        assert palette.shape == (4, 3)
        assert np.all(indices == 0)
        assert _lab_mse(image, palette, indices) == 0.0

    def test_matches_exhaustive_bipartition_oracle(self):
        # Two loose chroma blobs; k-means++ finds the global 2-partition.
        rng = np.random.default_rng(2)
        blob_a = np.array([[30, 30, 30], [40, 35, 30], [35, 45, 40]])
        blob_b = np.array([[200, 210, 205], [220, 205, 215], [210, 220, 200]])
        pool = np.concatenate([blob_a, blob_b]).astype(np.uint8)
        image = pool[rng.integers(0, 6, size=(8, 8))]
        palette, indices = per_image_kmeans(image, q=1, seed=3)

        lab = srgb_to_lab(image).reshape(-1, 3)
        colors, counts = np.unique(lab, axis=0, return_counts=True)
        oracle = _best_bipartition_inertia(colors, counts)
        inertia = ((lab - palette[indices.reshape(-1)]) ** 2).sum()
        assert inertia == pytest.approx(oracle, rel=1e-9)

    def test_index_range(self):
        rng = np.random.default_rng(4)
        image = rng.integers(0, 256, size=(5, 5, 3), dtype=np.uint8)
        for q in (1, 2, 3):
            palette, indices = per_image_kmeans(image, q, seed=0)
            assert palette.shape == (1 << q, 3)
            assert indices.max() < (1 << q)


class TestMedianCut:
    def test_few_distinct_colors_recovered_exactly(self):
        rng = np.random.default_rng(5)
        colors = np.array([(0, 0, 0), (255, 0, 0), (0, 255, 0)], dtype=np.uint8)
        image = colors[rng.integers(0, 3, size=(6, 6))]
        palette, indices = median_cut(image, q=2)
        assert _lab_mse(image, palette, indices) <= 1e-18
        got = {tuple(np.round(c, 6)) for c in palette}
        want = {tuple(np.round(srgb_to_lab(c.astype(np.float64)), 6)) for c in colors}
        assert want <= got

    def test_two_color_image_q1(self):
        image = np.zeros((4, 4, 3), dtype=np.uint8)
        image[:, 2:] = (10, 200, 60)
        palette, indices = median_cut(image, q=1)
        assert _lab_mse(image, palette, indices) == 0.0
        assert len({tuple(c) for c in palette}) == 2

    def test_hand_traced_populations(self):
        # Gray values, row-major: the trace splits at boundaries 7 | 3 of 9 | 3 of 7,
        # leaving boxes {0,0,10}, {80,80,90,90}, {160,160,170}, {250 x4, 255 x2}
        # with populations 3, 4, 3, 6 (see the split rule in median_cut).
        values = [0, 0, 10, 80, 80, 90, 90, 160, 160, 170, 250, 250, 250, 250, 255, 255]
        image = np.array(values, dtype=np.uint8).reshape(4, 4, 1).repeat(3, axis=2)
        palette, indices = median_cut(image, q=2)
        counts = np.bincount(indices.reshape(-1), minlength=4)
        # Palette order is population-descending, L ascending on ties.
        assert counts.tolist() == [6, 4, 3, 3]
        grays = np.array([1510.0 / 6.0, 85.0, 10.0 / 3.0, 490.0 / 3.0])
        expected = srgb_to_lab(np.stack([grays] * 3, axis=1))
        assert np.allclose(palette, expected, atol=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        a_pal, a_idx = median_cut(image, q=3)
        b_pal, b_idx = median_cut(image, q=3)
        assert np.array_equal(a_pal, b_pal)
        assert np.array_equal(a_idx, b_idx)


class TestOctree:
    def test_few_distinct_colors_recovered_exactly(self):
        rng = np.random.default_rng(7)
        colors = np.array([(3, 7, 9), (250, 1, 30), (90, 200, 160), (17, 17, 17)],
                          dtype=np.uint8)
        image = colors[rng.integers(0, 4, size=(5, 7))]
        palette, indices = octree_quantize(image, q=2)
        assert _lab_mse(image, palette, indices) <= 1e-18

    def test_solid_image_single_effective_color(self):
        image = np.full((3, 3, 3), (9, 90, 200), dtype=np.uint8)
        palette, indices = octree_quantize(image, q=2)
        assert np.all(indices == 0)
        assert len({tuple(c) for c in palette}) == 1

    def test_leaves_respect_top_level_octants(self):
        # Colors live in three distinct top-level octants; with q=2 no merge
        # can cross an octant boundary, so every palette color stays inside
        # the octant of the inputs it averaged.
        dark = [(20, 30, 40), (60, 50, 10), (100, 90, 80)]        # octant 000
        red = [(200, 30, 40), (240, 50, 10), (150, 90, 80)]       # octant 100
        green = [(20, 200, 40), (60, 240, 10), (100, 150, 80)]    # octant 010
        pool = np.array(dark + red + green, dtype=np.uint8)
        rng = np.random.default_rng(8)
        image = pool[rng.integers(0, 9, size=(8, 8))]
        palette, _ = octree_quantize(image, q=2)
        from dcq.color import lab_to_srgb
        srgb = lab_to_srgb(palette)
        seen = set()
        for color in srgb.reshape(-1, 3):
            octant = (color[0] >= 128, color[1] >= 128, color[2] >= 128)
            assert octant in {(False, False, False), (True, False, False),
                              (False, True, False)}
            seen.add(octant)
        assert len(seen) == 3

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        a_pal, a_idx = octree_quantize(image, q=3)
        b_pal, b_idx = octree_quantize(image, q=3)
        assert np.array_equal(a_pal, b_pal)
        assert np.array_equal(a_idx, b_idx)

    def test_index_range_all_methods(self):
        rng = np.random.default_rng(10)
        image = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        for q in (1, 3):
            for method in (median_cut, octree_quantize):
                palette, indices = method(image, q)
                assert palette.shape == (1 << q, 3)
                assert indices.max() < (1 << q)


class TestSharingTradeoff:
    def test_per_image_palette_fits_at_least_as_well(self):
        # A shared palette built across several images cannot beat each
        # image's own palette on that image (up to k-means local optima).
        from dcq.palette import build_cluster_palette
        from dcq.refine import quantize_hard
        rng = np.random.default_rng(11)
        images = [rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8) for _ in range(6)]
        labs = [srgb_to_lab(im) for im in images]
        shared, _ = build_cluster_palette(
            np.concatenate([l.reshape(-1, 3) for l in labs]), q=2, seed=0, cap=None)
        wins = 0
        for im, lab in zip(images, labs):
            own_pal, own_idx = per_image_kmeans(im, q=2, seed=0)
            own_mse = ((lab - own_pal[own_idx]) ** 2).sum(axis=2).mean()
            _, shared_idx = quantize_hard(lab, shared)
            shared_mse = ((lab - shared[shared_idx]) ** 2).sum(axis=2).mean()
            if own_mse <= shared_mse + 1e-12:
                wins += 1
        assert wins >= 5  # at least ~95% of images

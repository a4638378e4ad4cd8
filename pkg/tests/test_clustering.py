import itertools

import numpy as np
import pytest

from dcq.clustering import (
    ClusterModel,
    FormatError,
    cluster_dataset,
    color_histogram_features,
    kmeans,
    load_features,
    write_features,
)


def _exhaustive_best_inertia(points: np.ndarray, k: int) -> float:
    """Brute-force minimum inertia over every possible label assignment."""
    n = len(points)
    all_labels = np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int8)
    norms = (points ** 2).sum(axis=1)
    best = np.inf
    for chunk in np.array_split(all_labels, 16):
        total = np.zeros(len(chunk))
        for c in range(k):
            mask = (chunk == c).astype(np.float64)
            cnt = mask.sum(axis=1)
            sums = mask @ points
            sq = mask @ norms
            contrib = np.where(cnt > 0, sq - (sums ** 2).sum(axis=1) / np.maximum(cnt, 1), 0.0)
            total += contrib
        best = min(best, float(total.min()))
    return best


def _solid(color, h=8, w=8):
    return np.full((h, w, 3), color, dtype=np.uint8)


class TestHistogramFeatures:
    def test_solid_color_bins(self):
        feat = color_histogram_features(_solid((32, 200, 100)))
        assert feat.shape == (48,)
        expect = np.zeros(48)
        expect[32 // 16] = 1.0            # r bin 2
        expect[16 + 200 // 16] = 1.0      # g bin 12
        expect[32 + 100 // 16] = 1.0      # b bin 6
        assert np.array_equal(feat, expect)

    def test_half_black_half_white(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0] = 255
        feat = color_histogram_features(img)
        for c in range(3):
            block = feat[16 * c:16 * (c + 1)]
            assert block[0] == 0.5 and block[15] == 0.5
            assert block[1:15].sum() == 0

    def test_blocks_normalized(self):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(7, 5, 3), dtype=np.uint8)
        feat = color_histogram_features(img)
        for c in range(3):
            assert abs(feat[16 * c:16 * (c + 1)].sum() - 1.0) < 1e-9


class TestKmeans:
    def test_perfect_fit_when_k_equals_points(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 10, size=(6, 3))
        model = kmeans(pts, k=6, seed=4)
        assert model.inertia == 0.0
        assert np.allclose(np.sort(model.centroids, axis=0), np.sort(pts, axis=0))

    def test_k1_centroid_is_mean(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-5, 5, size=(23, 4))
        model = kmeans(pts, k=1, seed=0)
        assert np.allclose(model.centroids[0], pts.mean(axis=0), atol=1e-9)
        assert np.all(model.assignments == 0)

    def test_three_separated_triples_match_exhaustive_oracle(self):
        rng = np.random.default_rng(5)
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 9.0]])
        pts = np.concatenate([c + rng.uniform(-0.5, 0.5, size=(4, 2)) for c in centers])
        model = kmeans(pts, k=3, seed=9)
        best = _exhaustive_best_inertia(pts, 3)
        assert model.inertia == pytest.approx(best, rel=1e-9)
        # The recovered partition is exactly the three triples.
        groups = [frozenset(np.flatnonzero(model.assignments == c)) for c in range(3)]
        assert set(groups) == {frozenset(range(0, 4)), frozenset(range(4, 8)),
                               frozenset(range(8, 12))}

    def test_inertia_history_non_increasing(self):
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(60, 5))
        model = kmeans(pts, k=7, seed=1)
        hist = np.array(model.inertia_history)
        assert np.all(np.diff(hist) <= 1e-9)

    def test_inertia_matches_recomputation(self):
        rng = np.random.default_rng(12)
        pts = rng.normal(size=(40, 3))
        model = kmeans(pts, k=5, seed=2)
        recomputed = ((pts - model.centroids[model.assignments]) ** 2).sum()
        assert model.inertia == pytest.approx(recomputed, rel=1e-6)

    def test_assignments_are_nearest_centroid(self):
        rng = np.random.default_rng(21)
        pts = rng.normal(size=(50, 4))
        model = kmeans(pts, k=6, seed=3)
        d = ((pts[:, None, :] - model.centroids[None]) ** 2).sum(axis=2)
        assert np.array_equal(model.assignments, np.argmin(d, axis=1))

    def test_seeded_determinism(self):
        rng = np.random.default_rng(30)
        pts = rng.normal(size=(80, 6))
        a = kmeans(pts, k=9, seed=123)
        b = kmeans(pts, k=9, seed=123)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia

    def test_k_larger_than_points_rejected(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), k=4)

    def test_non_finite_rejected(self):
        pts = np.zeros((4, 2))
        pts[1, 0] = np.nan
        with pytest.raises(ValueError):
            kmeans(pts, k=2)


class TestClusterDataset:
    def test_identical_features_collapse_to_cluster_zero(self):
        feats = np.tile([0.25, 0.5, 0.25], (30, 1))
        model = cluster_dataset(feats, k=20, seed=0)
        assert np.all(model.assignments == 0)
        assert model.inertia == 0.0

    def test_two_chromatic_groups_form_pure_clusters(self):
        rng = np.random.default_rng(42)
        reds = [_solid((200 + int(rng.integers(0, 8)), 10, 10)) for _ in range(20)]
        blues = [_solid((10, 10, 200 + int(rng.integers(0, 8)))) for _ in range(20)]
        feats = np.array([color_histogram_features(im) for im in reds + blues])
        model = cluster_dataset(feats, k=2, seed=7)
        red_labels = set(model.assignments[:20])
        blue_labels = set(model.assignments[20:])
        assert len(red_labels) == 1 and len(blue_labels) == 1
        assert red_labels != blue_labels

    def test_k1_assigns_everything_to_zero(self):
        rng = np.random.default_rng(3)
        feats = rng.uniform(size=(12, 4))
        model = cluster_dataset(feats, k=1, seed=0)
        assert np.all(model.assignments == 0)

    def test_beats_random_assignment(self):
        rng = np.random.default_rng(9)
        feats = rng.normal(size=(60, 8))
        model = cluster_dataset(feats, k=5, seed=11)
        labels = rng.integers(0, 5, size=60)
        labels[:5] = np.arange(5)
        cents = np.array([feats[labels == c].mean(axis=0) for c in range(5)])
        random_inertia = ((feats - cents[labels]) ** 2).sum()
        assert model.inertia <= random_inertia


class TestFeatureFiles:
    def test_fixture_two_vectors(self, tmp_path):
        path = tmp_path / "f.dcqf"
        write_features(np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32), path)
        got = load_features(path)
        assert got.shape == (2, 3)
        assert np.array_equal(got, [[1, 2, 3], [4, 5, 6]])

    def test_round_trip_random(self, tmp_path):
        rng = np.random.default_rng(77)
        for i in range(10):
            feats = rng.normal(size=(int(rng.integers(1, 9)), int(rng.integers(1, 17))))
            feats = feats.astype(np.float32)
            path = tmp_path / f"r{i}.dcqf"
            write_features(feats, path)
            assert np.array_equal(load_features(path), feats.astype(np.float64))

    def test_truncation_reports_byte_counts(self, tmp_path):
        path = tmp_path / "t.dcqf"
        write_features(np.ones((3, 4), dtype=np.float32), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(FormatError, match=r"expected 61 bytes, got 56"):
            load_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dcqf"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError, match="magic"):
            load_features(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "nan.dcqf"
        feats = np.array([[np.inf, 0.0]], dtype=np.float32)
        import struct
        with open(path, "wb") as fh:
            fh.write(b"DCQF" + struct.pack("<BII", 1, 1, 2) + feats.tobytes())
        with pytest.raises(FormatError, match="non-finite"):
            load_features(path)

from fractions import Fraction

import numpy as np
import pytest

from dcq.clustering import FormatError
from dcq.color import lab_to_srgb, srgb_to_lab
from dcq.refine import quantize_hard
from dcq.store import (
    QuantizedDataset,
    QuantizedRecord,
    compression_ratio,
    decode,
    distinct_color_count,
    encode,
    encoded_size,
    load_images,
    pack_indices,
    prune_tier_label,
    read_labels,
    reconstruct,
    write_images,
    write_labels,
)


def _random_dataset(rng):
    q = int(rng.integers(1, 9))
    clusters = int(rng.integers(1, 4))
    n = int(rng.integers(1, 4))
    h = int(rng.integers(1, 7))
    w = int(rng.integers(1, 7))
    palettes = rng.integers(0, 256, size=(clusters, 1 << q, 3), dtype=np.uint8)
    records = [
        QuantizedRecord(
            cluster_id=int(rng.integers(0, clusters)),
            label=None if rng.random() < 0.3 else int(rng.integers(0, 1000)),
            indices=rng.integers(0, 1 << q, size=(h, w), dtype=np.uint8),
        )
        for _ in range(n)
    ]
    return QuantizedDataset(q=q, height=h, width=w, palettes=palettes, records=records)


def _assert_datasets_equal(a, b):
    assert (a.q, a.height, a.width) == (b.q, b.height, b.width)
    assert np.array_equal(a.palettes, b.palettes)
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        assert ra.cluster_id == rb.cluster_id
        assert ra.label == rb.label
        assert np.array_equal(ra.indices, rb.indices)


class TestPacking:
    def test_msb_first_single_byte(self):
        assert pack_indices(np.array([1, 0, 1, 1], dtype=np.uint8), 1) == b"\xb0"

    def test_q3_packing(self):
        # codes 5, 1 -> bits 101 001, padded -> 1010 0100 = 0xA4
        assert pack_indices(np.array([5, 1], dtype=np.uint8), 3) == b"\xa4"


class TestCodec:
    def test_micro_fixture_28_bytes(self):
        palettes = np.array([[[10, 20, 30], [200, 100, 50]]], dtype=np.uint8)
        rec = QuantizedRecord(cluster_id=0, label=None,
                              indices=np.array([[1, 0], [1, 1]], dtype=np.uint8))
        ds = QuantizedDataset(q=1, height=2, width=2, palettes=palettes, records=[rec])
        blob = encode(ds)
        expected = (
            b"DCQD"
            + bytes([1, 1])                     # version, q
            + (1).to_bytes(2, "little")          # num_clusters
            + (1).to_bytes(4, "little")          # num_images
            + (2).to_bytes(2, "little")          # height
            + (2).to_bytes(2, "little")          # width
            + bytes([3])                         # channels
            + bytes([10, 20, 30, 200, 100, 50])  # palette block
            + (0).to_bytes(2, "little")          # cluster_id
            + (0xFFFF).to_bytes(2, "little")     # label sentinel
            + b"\xb0"                            # indices 1,0,1,1 MSB-first
        )
        assert len(blob) == 28
        assert blob == expected
        _assert_datasets_equal(decode(blob), ds)

    def test_round_trip_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            ds = _random_dataset(rng)
            blob = encode(ds)
            assert len(blob) == encoded_size(ds.q, ds.num_clusters, len(ds.records),
                                             ds.height, ds.width)
            back = decode(blob)
            _assert_datasets_equal(back, ds)
            assert encode(back) == blob

    def test_truncation_names_expected_length(self):
        rng = np.random.default_rng(1)
        blob = encode(_random_dataset(rng))
        with pytest.raises(FormatError, match=f"expected {len(blob)}"):
            decode(blob[:-1])

    def test_trailing_garbage_rejected(self):
        rng = np.random.default_rng(2)
        blob = encode(_random_dataset(rng))
        with pytest.raises(FormatError, match="trailing garbage"):
            decode(blob + b"\x00")

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            decode(b"WHAT" + bytes(24))

    def test_bad_version(self):
        rng = np.random.default_rng(3)
        blob = bytearray(encode(_random_dataset(rng)))
        blob[4] = 9
        with pytest.raises(FormatError, match="version 9"):
            decode(bytes(blob))

    def test_out_of_range_cluster_id(self):
        palettes = np.zeros((1, 2, 3), dtype=np.uint8)
        rec = QuantizedRecord(0, None, np.zeros((1, 1), dtype=np.uint8))
        blob = bytearray(encode(QuantizedDataset(1, 1, 1, palettes, [rec])))
        blob[23] = 5  # record's cluster_id low byte
        with pytest.raises(FormatError, match="cluster_id 5"):
            decode(bytes(blob))

    def test_palette_byte_flip_still_decodes(self):
        rng = np.random.default_rng(4)
        ds = _random_dataset(rng)
        blob = bytearray(encode(ds))
        blob[17] ^= 0xFF  # first palette byte; palettes are opaque colors
        back = decode(bytes(blob))
        assert back.palettes[0, 0, 0] == ds.palettes[0, 0, 0] ^ 0xFF

    def test_invalid_dataset_rejected_before_encode(self):
        palettes = np.zeros((1, 2, 3), dtype=np.uint8)
        rec = QuantizedRecord(3, None, np.zeros((1, 1), dtype=np.uint8))
        with pytest.raises(ValueError, match="cluster_id 3"):
            encode(QuantizedDataset(1, 1, 1, palettes, [rec]))
        rec2 = QuantizedRecord(0, None, np.full((1, 1), 2, dtype=np.uint8))
        with pytest.raises(ValueError, match="index 2"):
            encode(QuantizedDataset(1, 1, 1, palettes, [rec2]))


class TestReconstruct:
    def test_all_zero_indices_give_solid_image(self):
        palettes = np.array([[[7, 8, 9], [1, 2, 3]]], dtype=np.uint8)
        rec = QuantizedRecord(0, None, np.zeros((3, 4), dtype=np.uint8))
        img = reconstruct(rec, palettes)
        assert img.shape == (3, 4, 3)
        assert np.all(img == [7, 8, 9])

    def test_palette_permutation_with_remap_is_identity(self):
        rng = np.random.default_rng(5)
        palettes = rng.integers(0, 256, size=(1, 4, 3), dtype=np.uint8)
        indices = rng.integers(0, 4, size=(5, 5), dtype=np.uint8)
        perm = rng.permutation(4)
        inv = np.argsort(perm)
        remapped = inv[indices].astype(np.uint8)
        a = reconstruct(QuantizedRecord(0, None, indices), palettes)
        b = reconstruct(QuantizedRecord(0, None, remapped), palettes[:, perm])
        assert np.array_equal(a, b)

    def test_matches_lab_roundtrip_of_quantized_image(self):
        rng = np.random.default_rng(6)
        img = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
        palette_lab = srgb_to_lab(rng.integers(0, 256, size=(4, 3), dtype=np.uint8))
        quant_lab, indices = quantize_hard(srgb_to_lab(img), palette_lab)
        palettes = lab_to_srgb(palette_lab)[None]
        rec = QuantizedRecord(0, None, indices.astype(np.uint8))
        assert np.array_equal(reconstruct(rec, palettes), lab_to_srgb(quant_lab))

    def test_reconstruction_uses_only_palette_colors(self):
        rng = np.random.default_rng(7)
        ds = _random_dataset(rng)
        for rec in ds.records:
            img = reconstruct(rec, ds.palettes)
            colors = {tuple(c) for c in img.reshape(-1, 3)}
            allowed = {tuple(c) for c in ds.palettes[rec.cluster_id]}
            assert colors <= allowed


class TestCompressionAccounting:
    def test_formula_is_exact_rational(self):
        assert compression_ratio(2) == Fraction(11, 12)
        assert compression_ratio(1) == Fraction(23, 24)
        assert compression_ratio(24) == 0
        assert float(compression_ratio(2)) == pytest.approx(0.91667, abs=5e-6)

    def test_out_of_range_rejected(self):
        for q in (0, 25, -1):
            with pytest.raises(ValueError):
                compression_ratio(q)

    def test_tier_labels(self):
        assert [prune_tier_label(q) for q in (1, 2, 3, 4, 5)] == \
            ["96%", "92%", "87.5%", "83%", "80%"]

    def test_distinct_colors_forty(self):
        rng = np.random.default_rng(8)
        palettes = rng.permutation(256 * 256 * 256)[:40]
        palettes = np.stack([palettes // 65536, (palettes // 256) % 256,
                             palettes % 256], axis=1).astype(np.uint8).reshape(20, 2, 3)
        ds = QuantizedDataset(1, 2, 2, palettes, [])
        assert distinct_color_count(ds) == 40

    def test_distinct_colors_deduplicates_padding(self):
        palettes = np.full((1, 4, 3), 66, dtype=np.uint8)
        assert distinct_color_count(QuantizedDataset(2, 1, 1, palettes, [])) == 1

    def test_distinct_colors_shared_across_clusters(self):
        # Hand count: {S, c1} | {S, c2} | {c3, c4} -> {S, c1, c2, c3, c4} = 5.
        shared = [9, 9, 9]
        palettes = np.array([
            [shared, [1, 0, 0]],
            [shared, [0, 1, 0]],
            [[2, 2, 2], [0, 0, 1]],
        ], dtype=np.uint8)
        ds = QuantizedDataset(1, 1, 1, palettes, [])
        assert distinct_color_count(ds) == 5

    def test_bits_per_pixel_before_padding(self):
        for q in range(1, 9):
            n = 16
            packed = pack_indices(np.zeros(n, dtype=np.uint8), q)
            assert len(packed) * 8 >= n * q
            assert (len(packed) - 1) * 8 < n * q or n * q % 8 == 0


class TestRawImageContainer:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        images = rng.integers(0, 256, size=(5, 4, 6, 3), dtype=np.uint8)
        path = tmp_path / "images.dcqi"
        write_images(images, path)
        assert np.array_equal(load_images(path), images)

    def test_size_mismatch(self, tmp_path):
        path = tmp_path / "bad.dcqi"
        write_images(np.zeros((2, 2, 2, 3), dtype=np.uint8), path)
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(FormatError, match="expected 38 bytes, got 36"):
            load_images(path)

    def test_labels_manifest(self, tmp_path):
        path = tmp_path / "labels.txt"
        write_labels([3, 1, 4, 1, 5], path)
        assert read_labels(path) == [3, 1, 4, 1, 5]

    def test_labels_reject_garbage(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("1\nfoo\n")
        with pytest.raises(FormatError, match="labels.txt:2"):
            read_labels(path)

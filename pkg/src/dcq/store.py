"""Bit-exact serialization of quantized datasets and compression accounting.

DCQD container (little-endian):
    magic "DCQD" | u8 version=1 | u8 q | u16 num_clusters | u32 num_images
    | u16 height | u16 width | u8 channels=3            -- 17 header bytes
    palette block: num_clusters * 2^q * 3 bytes sRGB
    per image: u16 cluster_id | u16 label | ceil(H*W*q/8) packed index bytes

Pixel codes are packed q bits each, MSB-first within bytes, row-major,
zero-padded to a byte boundary per image so records stay byte-addressable.

DCQI raw-image container (ingestion):
    magic "DCQI" | u8 version=1 | u32 N | u16 H | u16 W | u8 channels=3
    then N*H*W*3 bytes sRGB row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .clustering import FormatError

DCQD_MAGIC = b"DCQD"
DCQD_VERSION = 1
DCQI_MAGIC = b"DCQI"
DCQI_VERSION = 1

NO_LABEL = 0xFFFF

# Display tiers used when lining quantization depths up against dataset
# pruning ratios; the exact ratios round to these conventional values
# (5 bits is nominally the 80% tier even though 19/24 is 79.17%).
PRUNE_TIER_LABELS = {1: "96%", 2: "92%", 3: "87.5%", 4: "83%", 5: "80%"}


@dataclass
class QuantizedRecord:
    cluster_id: int
    label: int | None              # None on the wire is the 0xFFFF sentinel
    indices: np.ndarray            # (H, W) uint8 palette codes, each < 2^q


@dataclass
class QuantizedDataset:
    q: int
    height: int
    width: int
    palettes: np.ndarray           # (num_clusters, 2^q, 3) uint8 sRGB
    records: list[QuantizedRecord]

    @property
    def num_clusters(self) -> int:
        return self.palettes.shape[0]


def compression_ratio(q: int) -> Fraction:
    """Fraction of per-pixel color bits removed relative to 24-bit RGB."""
    if not 1 <= q <= 24:
        raise ValueError(f"q must be in [1, 24], got {q}")
    return Fraction(24 - q, 24)


def prune_tier_label(q: int) -> str:
    """Conventional percentage label for a bit depth's compression tier."""
    if q in PRUNE_TIER_LABELS:
        return PRUNE_TIER_LABELS[q]
    percent = float(100 * compression_ratio(q))
    return f"{round(percent * 2) / 2:g}%"


def packed_row_bytes(height: int, width: int, q: int) -> int:
    return (height * width * q + 7) // 8


def encoded_size(q: int, num_clusters: int, num_images: int,
                 height: int, width: int) -> int:
    """Closed-form DCQD byte size: header, palette block, records."""
    return (17 + 3 * num_clusters * (1 << q)
            + num_images * (4 + packed_row_bytes(height, width, q)))


def pack_indices(indices: np.ndarray, q: int) -> bytes:
    """Pack pixel codes q bits each, MSB-first, zero-padded to a byte."""
    flat = np.asarray(indices, dtype=np.uint8).reshape(-1)
    shifts = np.arange(q - 1, -1, -1, dtype=np.uint8)
    bits = (flat[:, None] >> shifts[None, :]) & 1
    return np.packbits(bits.reshape(-1)).tobytes()


def unpack_indices(buf: bytes, height: int, width: int, q: int) -> np.ndarray:
    n = height * width
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=n * q)
    weights = (1 << np.arange(q - 1, -1, -1, dtype=np.uint16))
    codes = (bits.reshape(n, q).astype(np.uint16) * weights).sum(axis=1)
    return codes.astype(np.uint8).reshape(height, width)


def validate_dataset(ds: QuantizedDataset) -> None:
    if not 1 <= ds.q <= 8:
        raise ValueError(f"q must be in [1, 8], got {ds.q}")
    size = 1 << ds.q
    if ds.palettes.ndim != 3 or ds.palettes.shape[1:] != (size, 3):
        raise ValueError(
            f"palettes must have shape (C, {size}, 3), got {ds.palettes.shape}")
    if ds.num_clusters < 1 or ds.num_clusters > 0xFFFF:
        raise ValueError(f"cluster count {ds.num_clusters} out of range")
    if ds.height < 1 or ds.width < 1:
        raise ValueError(f"image shape {ds.height}x{ds.width} invalid")
    for i, rec in enumerate(ds.records):
        if not 0 <= rec.cluster_id < ds.num_clusters:
            raise ValueError(f"record {i}: cluster_id {rec.cluster_id} out of range")
        if rec.label is not None and not 0 <= rec.label < NO_LABEL:
            raise ValueError(f"record {i}: label {rec.label} out of range")
        if rec.indices.shape != (ds.height, ds.width):
            raise ValueError(
                f"record {i}: index plane {rec.indices.shape} != "
                f"({ds.height}, {ds.width})")
        if rec.indices.size and int(rec.indices.max()) >= size:
            raise ValueError(
                f"record {i}: index {int(rec.indices.max())} >= palette size {size}")


def encode(ds: QuantizedDataset) -> bytes:
    """Serialize to DCQD bytes; invariants are checked before writing."""
    validate_dataset(ds)
    out = bytearray()
    out += DCQD_MAGIC
    out += struct.pack("<BBHIHHB", DCQD_VERSION, ds.q, ds.num_clusters,
                       len(ds.records), ds.height, ds.width, 3)
    out += np.ascontiguousarray(ds.palettes, dtype=np.uint8).tobytes()
    for rec in ds.records:
        label = NO_LABEL if rec.label is None else rec.label
        out += struct.pack("<HH", rec.cluster_id, label)
        out += pack_indices(rec.indices, ds.q)
    return bytes(out)


def decode(blob: bytes) -> QuantizedDataset:
    """Parse DCQD bytes; the exact inverse of `encode`."""
    if blob[:4] != DCQD_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r} at offset 0, expected {DCQD_MAGIC!r}")
    if len(blob) < 17:
        raise FormatError(f"truncated header: {len(blob)} bytes, expected >= 17")
    version, q, num_clusters, num_images, height, width, channels = \
        struct.unpack_from("<BBHIHHB", blob, 4)
    if version != DCQD_VERSION:
        raise FormatError(f"unsupported DCQD version {version} at offset 4")
    if not 1 <= q <= 8:
        raise FormatError(f"bit depth {q} out of [1, 8] at offset 5")
    if channels != 3:
        raise FormatError(f"unsupported channel count {channels} at offset 16")
    if num_clusters < 1:
        raise FormatError("cluster count must be >= 1 (offset 6)")
    if height < 1 or width < 1:
        raise FormatError(f"invalid image shape {height}x{width} (offset 12)")

    expected = encoded_size(q, num_clusters, num_images, height, width)
    if len(blob) < expected:
        raise FormatError(f"truncated container: {len(blob)} bytes, expected {expected}")
    if len(blob) > expected:
        raise FormatError(
            f"trailing garbage: {len(blob) - expected} extra bytes after offset {expected}")

    size = 1 << q
    offset = 17
    palette_bytes = num_clusters * size * 3
    palettes = np.frombuffer(blob, dtype=np.uint8, count=palette_bytes,
                             offset=offset).reshape(num_clusters, size, 3).copy()
    offset += palette_bytes

    row_bytes = packed_row_bytes(height, width, q)
    records = []
    for i in range(num_images):
        cluster_id, label = struct.unpack_from("<HH", blob, offset)
        if cluster_id >= num_clusters:
            raise FormatError(
                f"record {i}: cluster_id {cluster_id} >= {num_clusters} "
                f"at offset {offset}")
        offset += 4
        indices = unpack_indices(blob[offset:offset + row_bytes], height, width, q)
        offset += row_bytes
        records.append(QuantizedRecord(
            cluster_id=cluster_id,
            label=None if label == NO_LABEL else label,
            indices=indices))
    return QuantizedDataset(q=q, height=height, width=width,
                            palettes=palettes, records=records)


def reconstruct(rec: QuantizedRecord, palettes: np.ndarray) -> np.ndarray:
    """Rebuild the (H, W, 3) sRGB image of one record from its palette."""
    return palettes[rec.cluster_id][rec.indices]


def distinct_color_count(ds: QuantizedDataset) -> int:
    """Distinct sRGB triples across all palettes (duplicates counted once)."""
    return np.unique(ds.palettes.reshape(-1, 3), axis=0).shape[0]


def write_dataset(ds: QuantizedDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(ds))


def load_dataset(path) -> QuantizedDataset:
    with open(path, "rb") as fh:
        return decode(fh.read())


def write_images(images: np.ndarray, path) -> None:
    """Write an (N, H, W, 3) uint8 stack as a DCQI container."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(f"images must be (N, H, W, 3), got {images.shape}")
    n, h, w = images.shape[:3]
    with open(path, "wb") as fh:
        fh.write(DCQI_MAGIC)
        fh.write(struct.pack("<BIHHB", DCQI_VERSION, n, h, w, 3))
        fh.write(images.tobytes())


def load_images(path) -> np.ndarray:
    """Parse a DCQI container into an (N, H, W, 3) uint8 stack."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DCQI_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {DCQI_MAGIC!r}")
    if len(blob) < 14:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes, expected >= 14)")
    version, n, h, w, channels = struct.unpack_from("<BIHHB", blob, 4)
    if version != DCQI_VERSION:
        raise FormatError(f"{path}: unsupported DCQI version {version}")
    if channels != 3:
        raise FormatError(f"{path}: unsupported channel count {channels}")
    expected = 14 + n * h * w * 3
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size mismatch, expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=14).reshape(n, h, w, 3).copy()


def read_labels(path) -> list[int]:
    """One integer label per line; blank lines ignored."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer label: {line!r}")
    return labels


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(f"{int(label)}\n")

"""Binary container I/O shared with the quantization toolkit.

The exporter talks to the core toolkit only through these file formats
(all little-endian), so the byte layouts are implemented here rather than
imported:

    DCQI  "DCQI" u8 version=1, u32 N, u16 H, u16 W, u8 channels=3,
          then N*H*W*3 sRGB bytes
    DCQF  "DCQF" u8 version=1, u32 N, u32 D, then N*D float32
    DCQA  "DCQA" u8 version=1, u32 N, u16 H, u16 W, then N*H*W float32 in [0,1]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def load_dcqi(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"DCQI":
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, n, h, w, channels = struct.unpack_from("<BIHHB", blob, 4)
    if version != 1:
        raise FormatError(f"{path}: unsupported DCQI version {version}")
    if channels != 3:
        raise FormatError(f"{path}: unsupported channel count {channels}")
    expected = 14 + n * h * w * 3
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=14).reshape(n, h, w, 3).copy()


def load_image_stack(path) -> np.ndarray:
    """DCQI container or a directory of PNGs sorted by filename."""
    path = Path(path)
    if path.is_dir():
        from PIL import Image
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".bmp"))
        if not files:
            raise FormatError(f"{path}: no PNG images found")
        images = [np.asarray(Image.open(p).convert("RGB")) for p in files]
        shapes = {im.shape for im in images}
        if len(shapes) != 1:
            raise FormatError(f"{path}: images have mixed shapes {sorted(shapes)}")
        return np.stack(images)
    return load_dcqi(path)


def write_dcqf(features: np.ndarray, path) -> None:
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2:
        raise ValueError(f"features must be (N, D), got {features.shape}")
    with open(path, "wb") as fh:
        fh.write(b"DCQF")
        fh.write(struct.pack("<BII", 1, *features.shape))
        fh.write(features.astype("<f4").tobytes(order="C"))


def write_dcqa(maps: np.ndarray, path) -> None:
    maps = np.asarray(maps, dtype=np.float32)
    if maps.ndim != 3:
        raise ValueError(f"attention maps must be (N, H, W), got {maps.shape}")
    if maps.size and (maps.min() < 0.0 or maps.max() > 1.0):
        raise ValueError("attention values must lie in [0, 1]")
    n, h, w = maps.shape
    with open(path, "wb") as fh:
        fh.write(b"DCQA")
        fh.write(struct.pack("<BIHH", 1, n, h, w))
        fh.write(maps.astype("<f4").tobytes(order="C"))

"""Color-space math, nearest-palette assignment, and Sobel gradient magnitudes.

Array conventions used throughout the package:

* raster image -- uint8 array of shape (H, W, 3), sRGB, row-major
* lab image    -- float64 array of shape (H, W, 3), CIE 1976 L*a*b* (D65)
* palette      -- float64 array of shape (P, 3) in LAB; index order is the
                  stored code order and therefore significant
* plane        -- float64 array of shape (..., H, W); leading axes are
                  broadcast batches

All functions here are pure and deterministic: identical inputs produce
bit-identical outputs.
"""

from __future__ import annotations

import numpy as np

# sRGB (IEC 61966-2-1) primaries to CIE XYZ, D65 white, 2 degree observer.
_M_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
], dtype=np.float64)
_M_XYZ_TO_RGB = np.linalg.inv(_M_RGB_TO_XYZ)

_D65_WHITE = np.array([0.95047, 1.00000, 1.08883], dtype=np.float64)

_LAB_EPS = 216.0 / 24389.0
_LAB_KAPPA = 24389.0 / 27.0

SOBEL_X = np.array([
    [-1.0, 0.0, 1.0],
    [-2.0, 0.0, 2.0],
    [-1.0, 0.0, 1.0],
], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()

# Stabilizer inside the gradient-magnitude square root; keeps the edge loss
# differentiable where both directional responses vanish.
GRADIENT_EPS = 1e-8


def require_image_shape(arr: np.ndarray, name: str = "image") -> tuple[int, int]:
    """Validate an (H, W, 3) image array and return (H, W)."""
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    if h < 1 or w < 1:
        raise ValueError(f"{name} must have positive height and width, got {arr.shape}")
    return h, w


def srgb_to_lab(rgb) -> np.ndarray:
    """Convert 8-bit sRGB values (shape (..., 3), range [0, 255]) to CIELAB.

    Piecewise sRGB decoding (linear below 0.04045), D65 white point.
    L lands in [0, 100]; a and b are unbounded floats (nominally [-128, 127]).
    """
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    linear = np.where(rgb > 0.04045, ((rgb + 0.055) / 1.055) ** 2.4, rgb / 12.92)
    xyz = linear @ _M_RGB_TO_XYZ.T
    t = xyz / _D65_WHITE
    f = np.where(t > _LAB_EPS, np.cbrt(t), (_LAB_KAPPA * t + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_srgb(lab) -> np.ndarray:
    """Invert srgb_to_lab; out-of-gamut values are clamped per channel to [0, 255]."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    f3 = f ** 3
    xyz = np.where(f3 > _LAB_EPS, f3, (116.0 * f - 16.0) / _LAB_KAPPA) * _D65_WHITE
    linear = xyz @ _M_XYZ_TO_RGB.T
    encoded = np.where(
        linear > 0.0031308,
        1.055 * np.power(np.maximum(linear, 0.0), 1.0 / 2.4) - 0.055,
        12.92 * linear,
    )
    return np.clip(np.rint(encoded * 255.0), 0.0, 255.0).astype(np.uint8)


def nearest_palette_index(pixels, palette) -> np.ndarray:
    """Index of the nearest palette color by squared Euclidean LAB distance.

    Ties break to the lowest palette index. `pixels` has shape (..., 3);
    the result drops that trailing axis.
    """
    palette = np.asarray(palette, dtype=np.float64)
    if palette.ndim != 2 or palette.shape[1] != 3:
        raise ValueError(f"palette must have shape (P, 3), got {palette.shape}")
    if palette.shape[0] == 0:
        raise ValueError("palette must not be empty")
    pixels = np.asarray(pixels, dtype=np.float64)
    flat = pixels.reshape(-1, 3)
    out = np.empty(flat.shape[0], dtype=np.int64)
    # Chunk so the (n, P, 3) difference tensor stays small.
    step = max(1, (1 << 21) // palette.shape[0])
    for start in range(0, flat.shape[0], step):
        d = flat[start:start + step, None, :] - palette[None, :, :]
        out[start:start + step] = np.argmin((d * d).sum(axis=2), axis=1)
    return out.reshape(pixels.shape[:-1])


def _correlate3(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid 3x3 correlation over the last two axes, fixed 9-term order."""
    h = padded.shape[-2] - 2
    w = padded.shape[-1] - 2
    out = np.zeros(padded.shape[:-2] + (h, w), dtype=np.float64)
    for u in range(3):
        for v in range(3):
            k = kernel[u, v]
            if k != 0.0:
                out += k * padded[..., u:u + h, v:v + w]
    return out


def _pad_edge(plane: np.ndarray) -> np.ndarray:
    width = [(0, 0)] * (plane.ndim - 2) + [(1, 1), (1, 1)]
    return np.pad(plane, width, mode="edge")


def _pad_edge_adjoint(grad: np.ndarray) -> np.ndarray:
    """Adjoint of one-pixel replicate padding: fold border gradients back in."""
    out = grad[..., 1:-1, 1:-1].copy()
    out[..., 0, :] += grad[..., 0, 1:-1]
    out[..., -1, :] += grad[..., -1, 1:-1]
    out[..., :, 0] += grad[..., 1:-1, 0]
    out[..., :, -1] += grad[..., 1:-1, -1]
    out[..., 0, 0] += grad[..., 0, 0]
    out[..., 0, -1] += grad[..., 0, -1]
    out[..., -1, 0] += grad[..., -1, 0]
    out[..., -1, -1] += grad[..., -1, -1]
    return out


def _correlate3_adjoint(grad: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint of `_correlate3 after replicate padding`, back to the unpadded plane."""
    width = [(0, 0)] * (grad.ndim - 2) + [(2, 2), (2, 2)]
    zero_padded = np.pad(grad, width, mode="constant")
    flipped = kernel[::-1, ::-1]
    return _pad_edge_adjoint(_correlate3(zero_padded, flipped))


def sobel_directional(plane) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal/vertical Sobel responses with replicate border padding."""
    plane = np.asarray(plane, dtype=np.float64)
    padded = _pad_edge(plane)
    return _correlate3(padded, SOBEL_X), _correlate3(padded, SOBEL_Y)


def sobel_magnitude(plane) -> np.ndarray:
    """Sobel gradient magnitude sqrt(gx^2 + gy^2 + eps), same shape as the input."""
    gx, gy = sobel_directional(plane)
    return np.sqrt(gx * gx + gy * gy + GRADIENT_EPS)

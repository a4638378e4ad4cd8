"""Texture-preserving palette refinement.

The refinement objective is the weighted per-channel MSE between Sobel
gradient magnitudes of the original and the hard-quantized LAB image. The
hard assignment is not differentiable, so gradients reach the palette via a
straight-through estimator: a quantized pixel passes its gradient to the
palette color it was assigned to, untouched, and to no other color.

Descent is a plain gradient step with an accept-if-not-worse line search
(learning rate halved up to 10 times per step), which makes the accepted
loss history non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .color import (
    GRADIENT_EPS,
    SOBEL_X,
    SOBEL_Y,
    _correlate3,
    _correlate3_adjoint,
    _pad_edge,
    nearest_palette_index,
    sobel_magnitude,
)

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0)
MAX_LR_HALVINGS = 10


@dataclass
class RefineConfig:
    steps: int = 100
    lr: float = 0.05
    weights: tuple = DEFAULT_WEIGHTS
    sample_images: int = 64   # per-cluster image subsample for refinement
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        check_weights(self.weights)


def check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,):
        raise ValueError(f"expected 3 channel weights, got shape {w.shape}")
    if (w < 0).any() or not w.any():
        raise ValueError("channel weights must be non-negative and not all zero")
    return w


def _magnitudes(images: np.ndarray) -> np.ndarray:
    """Sobel magnitudes of each LAB channel: (B, H, W, 3) -> (B, 3, H, W)."""
    return sobel_magnitude(np.moveaxis(images, 3, 1))


def edge_loss(orig_lab, quant_lab, weights=DEFAULT_WEIGHTS) -> float:
    """Weighted sum over L, a, b of mean squared Sobel-magnitude difference."""
    w = check_weights(weights)
    orig_lab = np.asarray(orig_lab, dtype=np.float64)
    quant_lab = np.asarray(quant_lab, dtype=np.float64)
    if orig_lab.shape != quant_lab.shape:
        raise ValueError(f"shape mismatch: {orig_lab.shape} vs {quant_lab.shape}")
    total = 0.0
    for ch in range(3):
        diff = sobel_magnitude(orig_lab[..., ch]) - sobel_magnitude(quant_lab[..., ch])
        total += w[ch] * float((diff * diff).mean())
    return total


def quantize_hard(lab_image, palette) -> tuple[np.ndarray, np.ndarray]:
    """Replace each pixel with its nearest palette color.

    Returns (quantized LAB image, per-pixel index plane).
    """
    lab_image = np.asarray(lab_image, dtype=np.float64)
    palette = np.asarray(palette, dtype=np.float64)
    indices = nearest_palette_index(lab_image, palette)
    return palette[indices], indices


def _batched_loss(orig_mag: np.ndarray, images: np.ndarray, palette: np.ndarray,
                  w: np.ndarray) -> float:
    """Total edge loss over a stack of images against fresh hard assignments."""
    indices = nearest_palette_index(images, palette)
    quant_mag = _magnitudes(palette[indices])
    diff = orig_mag - quant_mag
    per_channel = (diff * diff).mean(axis=(2, 3))       # (B, 3)
    return float((per_channel @ w).sum())


def edge_loss_gradient(lab_images, palette, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Analytic gradient of the summed edge loss w.r.t. each palette color.

    The hard assignment is held fixed (straight-through estimator); the
    chain rule runs through the Sobel magnitude, its stabilizer, and the
    replicate-padding adjoint.
    """
    w = check_weights(weights)
    images = np.stack([np.asarray(im, dtype=np.float64) for im in lab_images])
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(f"expected a stack of (H, W, 3) images, got {images.shape}")
    palette = np.asarray(palette, dtype=np.float64)
    b, h, w_px = images.shape[:3]

    indices = nearest_palette_index(images, palette)     # (B, H, W)
    quant = palette[indices]

    orig_planes = np.moveaxis(images, 3, 1)              # (B, 3, H, W)
    quant_planes = np.moveaxis(quant, 3, 1)
    padded = _pad_edge(quant_planes)
    gx = _correlate3(padded, SOBEL_X)
    gy = _correlate3(padded, SOBEL_Y)
    quant_mag = np.sqrt(gx * gx + gy * gy + GRADIENT_EPS)
    orig_mag = sobel_magnitude(orig_planes)

    # d(loss)/d(G_quant): per-channel MSE uses the per-pixel mean.
    d_mag = w[None, :, None, None] * 2.0 * (quant_mag - orig_mag) / (h * w_px)
    d_gx = d_mag * gx / quant_mag
    d_gy = d_mag * gy / quant_mag
    d_quant = (_correlate3_adjoint(d_gx, SOBEL_X)
               + _correlate3_adjoint(d_gy, SOBEL_Y))     # (B, 3, H, W)

    # STE scatter: each pixel's gradient lands on its assigned palette color.
    flat_idx = indices.reshape(-1)
    grad = np.empty_like(palette)
    for ch in range(3):
        grad[:, ch] = np.bincount(flat_idx, weights=d_quant[:, ch].reshape(-1),
                                  minlength=palette.shape[0])
    return grad


def refine_palette(lab_images, palette, cfg: RefineConfig) -> tuple[np.ndarray, list[float]]:
    """Gradient descent on the palette with monotone accepted loss.

    Each step recomputes the hard assignment, takes one STE gradient step,
    and accepts it only if the re-quantized total loss does not increase;
    otherwise the step's learning rate is halved (up to 10 times) before
    giving up and stopping early. Palette L components stay clamped to
    [0, 100]. Returns the refined palette and the accepted loss history
    (history[0] is the initial loss).
    """
    w = check_weights(cfg.weights)
    images = np.stack([np.asarray(im, dtype=np.float64) for im in lab_images])
    palette = np.asarray(palette, dtype=np.float64).copy()
    orig_mag = _magnitudes(images)

    loss = _batched_loss(orig_mag, images, palette, w)
    history = [loss]
    for _ in range(cfg.steps):
        grad = edge_loss_gradient(images, palette, w)
        lr = cfg.lr
        accepted = None
        for _attempt in range(MAX_LR_HALVINGS + 1):
            candidate = palette - lr * grad
            candidate[:, 0] = np.clip(candidate[:, 0], 0.0, 100.0)
            candidate_loss = _batched_loss(orig_mag, images, candidate, w)
            if candidate_loss <= loss:
                accepted = (candidate, candidate_loss)
                break
            lr *= 0.5
        if accepted is None:
            break
        palette, loss = accepted
        history.append(loss)
    return palette, history


def sample_cluster_members(member_indices: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Seeded uniform choice of `count` member images (all when under count)."""
    member_indices = np.asarray(member_indices)
    if count <= 0 or member_indices.size <= count:
        return member_indices
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(member_indices, size=count, replace=False))

"""Feature and attention export over a dataset manifest.

Features: each image runs through the model, the selected shallow block's
activation map is captured and global-average-pooled to a vector of the
block's channel count. Attention: the chosen CAM method runs at the
model's last convolutional stage, and each map is bilinearly resized to
the image size and min-max normalized to [0, 1] (all zeros when the map is
constant). Output order always matches the input image order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .cam import compute_cams
from .formats import load_image_stack, write_dcqa, write_dcqf
from .models import last_conv_layer, load_model, preprocess, resolve_layer


@dataclass
class ExportManifest:
    model: str                    # torchvision name or model file path
    images: str                   # DCQI container or PNG directory
    weights: str | None = None    # optional state-dict path for named models
    feature_layer: str = "auto"   # default: first residual block
    cam_layer: str = "auto"       # default: last convolution
    method: str = "gradcam++"
    batch_size: int = 16
    device: str = "cpu"
    normalize: bool = True
    seed: int = 0


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def pooled_features(model: nn.Module, layer: nn.Module,
                    x: torch.Tensor) -> torch.Tensor:
    """Global-average-pooled activation of `layer` for a batch."""
    captured: list[torch.Tensor] = []
    handle = layer.register_forward_hook(lambda m, i, o: captured.append(o))
    try:
        with torch.no_grad():
            model(x)
    finally:
        handle.remove()
    acts = captured[-1]
    if acts.ndim != 4:
        raise ValueError(f"feature layer produced shape {tuple(acts.shape)}, "
                         "expected (N, C, H, W)")
    return acts.mean(dim=(2, 3))


def minmax_normalize(maps: torch.Tensor) -> torch.Tensor:
    """Per-image min-max to [0, 1]; constant maps become all zeros."""
    flat = maps.reshape(maps.shape[0], -1)
    lo = flat.min(dim=1).values[:, None, None]
    hi = flat.max(dim=1).values[:, None, None]
    span = hi - lo
    out = torch.where(span > 0, (maps - lo) / torch.clamp(span, min=1e-38),
                      torch.zeros_like(maps))
    return out.clamp(0.0, 1.0)


def export_features(manifest: ExportManifest, out_path) -> np.ndarray:
    """Run the manifest and write a DCQF file; returns the (N, D) features."""
    images = load_image_stack(manifest.images)
    model = load_model(manifest.model, manifest.weights, seed=manifest.seed,
                       device=manifest.device)
    layer = resolve_layer(model, manifest.feature_layer)
    rows = []
    for start, stop in _batches(len(images), manifest.batch_size):
        x = preprocess(images[start:stop], device=manifest.device,
                       normalize=manifest.normalize)
        rows.append(pooled_features(model, layer, x).cpu().numpy())
    features = np.concatenate(rows).astype(np.float32)
    write_dcqf(features, out_path)
    return features


def export_attention(manifest: ExportManifest, out_path) -> np.ndarray:
    """Run the manifest and write a DCQA file; returns the (N, H, W) maps."""
    images = load_image_stack(manifest.images)
    h, w = images.shape[1:3]
    model = load_model(manifest.model, manifest.weights, seed=manifest.seed,
                       device=manifest.device)
    layer = last_conv_layer(model, manifest.cam_layer)
    maps = []
    for start, stop in _batches(len(images), manifest.batch_size):
        x = preprocess(images[start:stop], device=manifest.device,
                       normalize=manifest.normalize)
        cams = compute_cams(model, layer, x, manifest.method, seed=manifest.seed)
        resized = F.interpolate(cams[:, None], size=(h, w), mode="bilinear",
                                align_corners=False)[:, 0]
        maps.append(minmax_normalize(resized).cpu().numpy())
    attention = np.concatenate(maps).astype(np.float32)
    write_dcqa(attention, out_path)
    return attention

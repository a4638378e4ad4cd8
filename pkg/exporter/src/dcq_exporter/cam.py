"""Class-activation attention maps: Grad-CAM, Grad-CAM++, LayerCAM, RISE.

Each method returns one low-resolution saliency map per image for the
model's predicted class; the caller resizes and normalizes. The gradient
methods share the capture machinery: a forward hook grabs the target
layer's activations, and per-sample gradients of the predicted-class logit
come from one autograd call over the summed scores.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

CAM_METHODS = ("gradcam", "gradcam++", "layercam", "rise")


def _activations_and_grads(model: nn.Module, layer: nn.Module,
                           x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    captured: list[torch.Tensor] = []
    handle = layer.register_forward_hook(lambda m, i, o: captured.append(o))
    try:
        with torch.enable_grad():
            logits = model(x)
            acts = captured[-1]
            classes = logits.argmax(dim=1)
            score = logits.gather(1, classes[:, None]).sum()
            grads = torch.autograd.grad(score, acts)[0]
    finally:
        handle.remove()
    return acts.detach(), grads.detach()


def gradcam(model, layer, x):
    acts, grads = _activations_and_grads(model, layer, x)
    weights = grads.mean(dim=(2, 3), keepdim=True)
    return F.relu((weights * acts).sum(dim=1))


def gradcam_pp(model, layer, x):
    acts, grads = _activations_and_grads(model, layer, x)
    g2 = grads ** 2
    g3 = g2 * grads
    denom = 2.0 * g2 + (acts * g3).sum(dim=(2, 3), keepdim=True)
    alpha = g2 / torch.where(denom.abs() < 1e-12, torch.full_like(denom, 1e-12), denom)
    weights = (alpha * F.relu(grads)).sum(dim=(2, 3), keepdim=True)
    return F.relu((weights * acts).sum(dim=1))


def layercam(model, layer, x):
    acts, grads = _activations_and_grads(model, layer, x)
    return F.relu((F.relu(grads) * acts).sum(dim=1))


def rise(model, layer, x, n_masks: int = 100, cell: int = 7,
         seed: int = 0, batch: int = 32):
    """Randomized input sampling: saliency from masked-input class scores."""
    n, _, h, w = x.shape
    rng = np.random.default_rng(seed)
    grid = rng.random(size=(n_masks, 1, cell, cell)) < 0.5
    masks = torch.from_numpy(grid.astype(np.float32))
    masks = F.interpolate(masks, size=(h, w), mode="bilinear", align_corners=False)

    with torch.no_grad():
        base = model(x)
        classes = base.argmax(dim=1)
        saliency = torch.zeros(n, h, w)
        for start in range(0, n_masks, batch):
            chunk = masks[start:start + batch].to(x.device)          # (M, 1, H, W)
            for i in range(n):
                masked = x[i:i + 1] * chunk                           # (M, 3, H, W)
                probs = torch.softmax(model(masked), dim=1)[:, classes[i]]
                saliency[i] += (probs[:, None, None] * chunk[:, 0]).sum(dim=0)
    return saliency / n_masks


def compute_cams(model: nn.Module, layer: nn.Module, x: torch.Tensor,
                 method: str, seed: int = 0) -> torch.Tensor:
    if method == "gradcam":
        return gradcam(model, layer, x)
    if method in ("gradcam++", "gradcampp"):
        return gradcam_pp(model, layer, x)
    if method == "layercam":
        return layercam(model, layer, x)
    if method == "rise":
        return rise(model, layer, x, seed=seed)
    raise ValueError(f"unknown attention method {method!r}; "
                     f"choose from {CAM_METHODS}")

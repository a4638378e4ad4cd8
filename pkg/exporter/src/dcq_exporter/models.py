"""Model loading and layer resolution.

A model spec is either a torchvision classifier name (constructed with
random but seeded weights unless a state-dict file is supplied) or a path
to a saved model (TorchScript or a pickled nn.Module). Models always run
in eval mode on the configured device.
"""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def load_model(spec: str, weights: str | None = None, seed: int = 0,
               device: str = "cpu") -> nn.Module:
    path = Path(spec)
    if path.exists():
        try:
            model = torch.load(path, map_location=device, weights_only=False)
        except (RuntimeError, ValueError):
            # TorchScript archives reject torch.load; fall back to jit
            model = torch.jit.load(path, map_location=device)
    else:
        import torchvision.models as tv_models
        if not hasattr(tv_models, spec):
            raise ValueError(f"unknown model spec {spec!r}: not a file and not a "
                             "torchvision model name")
        torch.manual_seed(seed)  # pins random init when no weights are given
        model = getattr(tv_models, spec)(weights=None)
        if weights is not None:
            state = torch.load(weights, map_location=device, weights_only=True)
            model.load_state_dict(state)
    model.to(device)
    model.eval()
    return model


def resolve_layer(model: nn.Module, selector: str) -> nn.Module:
    """Find a submodule by dotted name; "auto" picks the first block.

    "auto" prefers a submodule literally named "layer1" (the first residual
    block of torchvision ResNets) and otherwise falls back to the first
    top-level child that contains a convolution.
    """
    modules = dict(model.named_modules())
    if selector != "auto":
        if selector not in modules:
            raise ValueError(f"layer {selector!r} not found; available: "
                             f"{sorted(n for n in modules if n)[:20]}...")
        return modules[selector]
    if "layer1" in modules:
        return modules["layer1"]
    for name, child in model.named_children():
        if any(isinstance(m, nn.Conv2d) for m in child.modules()):
            return child
    raise ValueError("no convolutional block found; pass an explicit layer name")


def last_conv_layer(model: nn.Module, selector: str = "auto") -> nn.Module:
    """Target for class-activation maps: the model's last convolution."""
    if selector != "auto":
        return resolve_layer(model, selector)
    last = None
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            last = module
    if last is None:
        raise ValueError("model has no Conv2d layers")
    return last


def preprocess(images, device: str = "cpu", normalize: bool = True) -> torch.Tensor:
    """(N, H, W, 3) uint8 -> normalized float32 (N, 3, H, W) tensor."""
    x = torch.from_numpy(images.copy()).to(device).float().permute(0, 3, 1, 2) / 255.0
    if normalize:
        mean = torch.tensor(IMAGENET_MEAN, device=device).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD, device=device).view(1, 3, 1, 1)
        x = (x - mean) / std
    return x

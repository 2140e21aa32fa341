"""Gradient class-activation maps from the backbone's last convolutional
layer.

The map for a target class is the rectified, gradient-weighted sum of
that layer's feature maps, min-max normalized to [0, 1] and bilinearly
upsampled to the export resolution. A flat (constant) map normalizes to
all zeros rather than dividing by zero.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def last_conv_layer(model: nn.Module) -> nn.Module:
    """The final Conv2d module in forward order (inside the last block)."""
    last = None
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            last = module
    if last is None:
        raise ValueError("model has no convolutional layers")
    return last


class GradCam:
    """Hooks one layer and turns gradients into a class localization map."""

    def __init__(self, model: nn.Module, layer: nn.Module | None = None):
        self.model = model
        self.layer = layer if layer is not None else last_conv_layer(model)
        self._activations: torch.Tensor | None = None
        self._gradients: torch.Tensor | None = None
        self._handles = [
            self.layer.register_forward_hook(self._store_activation),
            self.layer.register_full_backward_hook(self._store_gradient),
        ]

    def _store_activation(self, module, inputs, output):
        self._activations = output.detach()

    def _store_gradient(self, module, grad_input, grad_output):
        self._gradients = grad_output[0].detach()

    def close(self) -> None:
        for handle in self._handles:
            handle.remove()

    def __enter__(self) -> "GradCam":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def compute(
        self, image: torch.Tensor, target_class: int | None = None, out_size: int = 224
    ) -> tuple[np.ndarray, int]:
        """Map for one (C, H, W) image; returns (grid, class used).

        With target_class None the predicted class is used.
        """
        self.model.eval()
        self.model.zero_grad(set_to_none=True)
        logits = self.model(image.unsqueeze(0))
        cls = int(logits.argmax(dim=1)) if target_class is None else int(target_class)
        logits[0, cls].backward()
        if self._activations is None or self._gradients is None:
            raise RuntimeError("hooks captured no activations; wrong layer?")
        weights = self._gradients.mean(dim=(2, 3), keepdim=True)  # GAP over space
        cam = F.relu((weights * self._activations).sum(dim=1, keepdim=True))
        cam = F.interpolate(cam, size=(out_size, out_size), mode="bilinear", align_corners=False)
        grid = cam[0, 0].cpu().numpy().astype(np.float64)
        lo, hi = float(grid.min()), float(grid.max())
        if hi - lo < 1e-12:
            return np.zeros_like(grid), cls
        return (grid - lo) / (hi - lo), cls

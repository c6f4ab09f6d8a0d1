"""Gradient-weighted class activation maps.

Both variants weight the activations of the last convolutional stage by
gradients of the target class logit and pass the weighted sum through a
ReLU, then bilinearly upsample to the input resolution:

* gradcam: channel weights are the spatial mean of the gradients.
* gradcam++: channel weights are a pixel-wise alpha-weighted sum of the
  positive gradients, with alpha = g^2 / (2 g^2 + sum(A) g^3) per pixel.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .models import ServedModel, cam_target_layer
from .smap import config_digest, write_smap

VARIANTS = ("gradcam", "gradcam++")


def load_image_tensor(path, size: tuple[int, int] = (224, 224)) -> torch.Tensor:
    """Decode an image file to a (1, 3, H, W) float tensor in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB").resize((size[1], size[0]), Image.BILINEAR)
        pixels = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy(pixels.transpose(2, 0, 1))[None]


def compute_cam(
    model: ServedModel, image: torch.Tensor, class_id: int, variant: str = "gradcam"
) -> np.ndarray:
    """CAM for one image, upsampled to the input resolution. Returns (H, W)."""
    if variant not in VARIANTS:
        raise ValueError(f"unsupported variant {variant!r}; choose from {VARIANTS}")
    if not 0 <= class_id < model.n_classes:
        raise ValueError(f"class_id {class_id} out of range [0, {model.n_classes})")
    if image.ndim != 4 or image.shape[0] != 1:
        raise ValueError(f"expected a (1, 3, H, W) batch, got {tuple(image.shape)}")

    captured: dict[str, torch.Tensor] = {}

    def forward_hook(_module, _inputs, output):
        captured["activations"] = output

    layer = cam_target_layer(model)
    handle = layer.register_forward_hook(forward_hook)
    try:
        model.module.zero_grad(set_to_none=True)
        logits = model.logits(image.requires_grad_(False))
        activations = captured["activations"]
        grads = torch.autograd.grad(logits[0, class_id], activations)[0]
    finally:
        handle.remove()

    acts = activations.detach()[0]  # (K, h, w)
    grads = grads.detach()[0]

    if variant == "gradcam":
        weights = grads.mean(dim=(1, 2))
    else:
        grads_sq = grads**2
        denom = 2.0 * grads_sq + acts.sum(dim=(1, 2), keepdim=True) * grads**3
        alpha = torch.where(denom != 0, grads_sq / denom, torch.zeros_like(denom))
        weights = (alpha * F.relu(grads)).sum(dim=(1, 2))

    cam = F.relu((weights[:, None, None] * acts).sum(dim=0))
    cam = F.interpolate(
        cam[None, None], size=image.shape[2:], mode="bilinear", align_corners=False
    )[0, 0]
    return cam.numpy()


def export_cam(
    model: ServedModel, image_path, class_id: int, variant: str, out_path
) -> np.ndarray:
    """Compute a CAM for an image file and write it as an SMAP."""
    image = load_image_tensor(image_path, size=model.input_shape[1:])
    cam = compute_cam(model, image, class_id, variant)
    digest = config_digest(f"{model.architecture}|{variant}|{model.weights_tag}")
    write_smap(cam, class_id, digest, out_path)
    return cam

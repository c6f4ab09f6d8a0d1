"""Model loading and preprocessing.

The wire protocol carries pixels in [0, 1]; every model-specific step
happens here.  Inputs are normalized per channel with the standard
ImageNet statistics (mean 0.485/0.456/0.406, std 0.229/0.224/0.225)
before the forward pass, and outputs are softmax probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torchvision import models as tv_models

ARCHITECTURES = ("resnet50", "resnet101", "vgg16")

N_CLASSES = 1000
INPUT_SHAPE = (3, 224, 224)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_BUILDERS = {
    "resnet50": (tv_models.resnet50, "ResNet50_Weights"),
    "resnet101": (tv_models.resnet101, "ResNet101_Weights"),
    "vgg16": (tv_models.vgg16, "VGG16_Weights"),
}


@dataclass
class ServedModel:
    """A loaded network plus everything the protocol needs to describe it."""

    architecture: str
    weights_tag: str  # "pretrained" or "random"
    module: torch.nn.Module = field(repr=False)
    labels: list[str] | None = None

    @property
    def n_classes(self) -> int:
        return N_CLASSES

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return INPUT_SHAPE

    def meta(self) -> dict:
        payload = {"n_classes": self.n_classes, "input_shape": list(self.input_shape)}
        if self.labels:
            payload["labels"] = self.labels
        return payload

    def normalize(self, batch: torch.Tensor) -> torch.Tensor:
        mean = torch.tensor(IMAGENET_MEAN, dtype=batch.dtype).view(1, 3, 1, 1)
        std = torch.tensor(IMAGENET_STD, dtype=batch.dtype).view(1, 3, 1, 1)
        return (batch - mean) / std

    @torch.no_grad()
    def score(self, batch: torch.Tensor) -> torch.Tensor:
        """Softmax probability rows for a float batch in [0, 1]."""
        logits = self.module(self.normalize(batch))
        return torch.softmax(logits, dim=1)

    def logits(self, batch: torch.Tensor) -> torch.Tensor:
        """Raw class scores with gradients enabled (CAM computation)."""
        return self.module(self.normalize(batch))


def load_model(architecture: str, weights: str = "pretrained") -> ServedModel:
    """Build one of the supported architectures.

    weights "pretrained" loads the ImageNet checkpoint (needs either a
    local torch hub cache or network access); "random" keeps the default
    initialization, which is enough for protocol and format testing.
    """
    if architecture not in _BUILDERS:
        raise ValueError(f"unsupported architecture {architecture!r}; choose from {ARCHITECTURES}")
    if weights not in ("pretrained", "random"):
        raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")
    builder, enum_name = _BUILDERS[architecture]
    labels = None
    if weights == "pretrained":
        weight_enum = getattr(tv_models, enum_name).IMAGENET1K_V1
        module = builder(weights=weight_enum)
        labels = list(weight_enum.meta["categories"])
    else:
        module = builder(weights=None)
    module.eval()
    return ServedModel(
        architecture=architecture, weights_tag=weights, module=module, labels=labels
    )


def cam_target_layer(model: ServedModel) -> torch.nn.Module:
    """Layer whose activations feed the CAM: the last convolutional stage.

    resnet50/101: the output of layer4.  vgg16: the ReLU after the last
    conv (features[29]), before the final pooling.
    """
    if model.architecture in ("resnet50", "resnet101"):
        return model.module.layer4
    return model.module.features[29]

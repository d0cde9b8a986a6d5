"""Classifier backbones: a production-size Inception-v3 style network and a
small CNN for desk-scale runs. Both end in a single logit; the sigmoid that
maps it to a [0, 1] score is applied by the loss and the inference path.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch.nn as nn


class BackboneKind(Enum):
    INCEPTION_V3_LIKE = "inception_v3_like"
    SMALL_CNN = "small_cnn"


INCEPTION_INPUT_SIZE = 299


@dataclass(frozen=True)
class BackboneSpec:
    kind: BackboneKind = BackboneKind.SMALL_CNN
    input_size: int = INCEPTION_INPUT_SIZE
    uses_batch_norm: bool = True

    def __post_init__(self) -> None:
        if not self.uses_batch_norm:
            raise ValueError("backbones must use batch normalization")
        if self.kind == BackboneKind.INCEPTION_V3_LIKE and self.input_size != INCEPTION_INPUT_SIZE:
            raise ValueError(
                f"inception_v3_like requires input_size {INCEPTION_INPUT_SIZE}"
            )
        if self.input_size < 32:
            raise ValueError("input_size must be >= 32")


class SmallCnn(nn.Module):
    """Four strided conv/batch-norm blocks with global average pooling."""

    def __init__(self, width: int = 16):
        super().__init__()
        w = width
        self.features = nn.Sequential(
            nn.Conv2d(3, w, kernel_size=5, stride=2, padding=2),
            nn.BatchNorm2d(w),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(w, 2 * w, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(2 * w),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * w, 4 * w, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(4 * w),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * w, 4 * w, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(4 * w),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )
        self.head = nn.Linear(4 * w, 1)

    def forward(self, x):
        return self.head(self.features(x)).squeeze(1)


class _InceptionWrapper(nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        out = self.net(x)
        if isinstance(out, tuple):  # train-mode aux logits
            out = out[0]
        return out.squeeze(1)


def build_backbone(spec: BackboneSpec, pretrained_init: bool = False) -> nn.Module:
    """Instantiate the network for a spec; pretrained initialization is honored
    only for the Inception backbone (the small CNN always starts random)."""
    if spec.kind == BackboneKind.SMALL_CNN:
        return SmallCnn()
    from torchvision.models import Inception_V3_Weights, inception_v3

    weights = Inception_V3_Weights.IMAGENET1K_V1 if pretrained_init else None
    net = inception_v3(weights=weights, aux_logits=True, init_weights=not pretrained_init)
    net.fc = nn.Linear(net.fc.in_features, 1)
    return _InceptionWrapper(net)

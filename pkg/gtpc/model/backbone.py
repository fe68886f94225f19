# gtpc/model/backbone.py
"""Siamese encoder backbones.

Every kind returns the stage-1 and stage-4 feature maps ``(c1, c4)`` at strides 4 and 32.
"""
from enum import Enum
from typing import Tuple

import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, model_validator
from torch import Tensor, nn
from torchvision import models

SHALLOW_STRIDE = 4
DEEP_STRIDE = 32
TINY_WIDTHS = (16, 24, 32, 48, 64)
RESNET_CHANNELS = (256, 2048)


class BackboneKind(str, Enum):
    TINY = "tiny"
    RESNET50 = "resnet50"
    RESNET101 = "resnet101"


class BackboneConfig(BaseModel):
    """Declarative description of the shared encoder."""

    model_config = ConfigDict(extra="forbid")

    kind: BackboneKind = Field(default=BackboneKind.TINY, description="Encoder family.")
    widths: Tuple[int, int, int, int, int] | None = Field(
        default=None,
        description="Stem and stage widths for the tiny encoder; ignored for ResNets.",
    )
    init_seed: int = Field(default=0, description="Seed for the truncated-normal weight initialisation.")
    pretrained: bool = Field(default=False, description="Load ImageNet weights into a ResNet encoder.")

    @model_validator(mode="after")
    def _check(self):
        if self.widths is not None and self.kind is not BackboneKind.TINY:
            raise ValueError("widths can only be set for the tiny backbone")
        if self.pretrained and self.kind is BackboneKind.TINY:
            raise ValueError("the tiny backbone has no pretrained weights")
        if self.widths is not None and min(self.widths) < 1:
            raise ValueError("backbone widths must be positive")
        return self

    @property
    def strides(self) -> Tuple[int, int]:
        return SHALLOW_STRIDE, DEEP_STRIDE

    @property
    def channels(self) -> Tuple[int, int]:
        if self.kind is BackboneKind.TINY:
            widths = self.widths or TINY_WIDTHS
            return widths[1], widths[4]
        return RESNET_CHANNELS


class _ResidualBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class TinyBackbone(nn.Module):
    """A five-stage residual encoder small enough for CPU experiments."""

    def __init__(self, widths: Tuple[int, int, int, int, int] = TINY_WIDTHS):
        super().__init__()
        stem, w1, w2, w3, w4 = widths
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(stem),
            nn.ReLU(),
        )
        self.layer1 = _ResidualBlock(stem, w1, 2)
        self.layer2 = _ResidualBlock(w1, w2, 2)
        self.layer3 = _ResidualBlock(w2, w3, 2)
        self.layer4 = _ResidualBlock(w3, w4, 2)

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        c1 = self.layer1(self.stem(x))
        c4 = self.layer4(self.layer3(self.layer2(c1)))
        return c1, c4


class ResNetBackbone(nn.Module):
    """torchvision ResNet trunk tapped after ``layer1`` and ``layer4``."""

    def __init__(self, kind: BackboneKind, pretrained: bool = False):
        super().__init__()
        builders = {BackboneKind.RESNET50: models.resnet50, BackboneKind.RESNET101: models.resnet101}
        net = builders[kind](weights="IMAGENET1K_V1" if pretrained else None)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        c1 = self.layer1(self.stem(x))
        c4 = self.layer4(self.layer3(self.layer2(c1)))
        return c1, c4


def build_backbone(config: BackboneConfig) -> nn.Module:
    if config.kind is BackboneKind.TINY:
        return TinyBackbone(config.widths or TINY_WIDTHS)
    return ResNetBackbone(config.kind, pretrained=config.pretrained)

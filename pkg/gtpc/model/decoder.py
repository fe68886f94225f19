# gtpc/model/decoder.py
"""DeepLabV3+-style change decoder shared by the main, gate and auxiliary heads."""
from typing import NamedTuple, Sequence, Tuple

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field
from torch import Tensor, nn

from gtpc.errors import DimensionError
from gtpc.model.backbone import BackboneKind

ASPP_RATES = (6, 12, 18)
NUM_CLASSES = 2


class DecoderWidths(NamedTuple):
    aspp: int
    reduce: int
    head: int


_DEFAULT_WIDTHS = {
    BackboneKind.TINY: DecoderWidths(64, 16, 64),
    BackboneKind.RESNET50: DecoderWidths(256, 48, 256),
    BackboneKind.RESNET101: DecoderWidths(256, 48, 256),
}


class DecoderConfig(BaseModel):
    """Channel widths of a decoder; unset widths follow the backbone kind."""

    model_config = ConfigDict(extra="forbid")

    aspp_width: int | None = Field(default=None, ge=1, description="Output channels of the ASPP block.")
    reduce_width: int | None = Field(default=None, ge=1, description="Channels of the 1x1 projection of d1.")
    head_width: int | None = Field(default=None, ge=1, description="Channels of the two 3x3 fusion convolutions.")

    def resolve(self, kind: BackboneKind) -> DecoderWidths:
        defaults = _DEFAULT_WIDTHS[kind]
        return DecoderWidths(
            aspp=self.aspp_width or defaults.aspp,
            reduce=self.reduce_width or defaults.reduce,
            head=self.head_width or defaults.head,
        )


def conv_bn_relu(in_channels: int, out_channels: int, kernel_size: int, dilation: int = 1) -> nn.Sequential:
    padding = dilation * (kernel_size // 2)
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size, padding=padding, dilation=dilation, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.ReLU(inplace=True),
    )


class ASPP(nn.Module):
    """Atrous spatial pyramid pooling: a 1x1 branch, dilated 3x3 branches and image pooling."""

    def __init__(self, in_channels: int, out_channels: int, rates: Sequence[int] = ASPP_RATES):
        super().__init__()
        branches = [conv_bn_relu(in_channels, out_channels, 1)]
        branches += [conv_bn_relu(in_channels, out_channels, 3, dilation=rate) for rate in rates]
        self.branches = nn.ModuleList(branches)
        self.pool = nn.Sequential(nn.AdaptiveAvgPool2d(1), conv_bn_relu(in_channels, out_channels, 1))
        self.project = conv_bn_relu(out_channels * (len(rates) + 2), out_channels, 1)

    @property
    def out_channels(self) -> int:
        return self.project[0].out_channels

    def forward(self, x: Tensor) -> Tensor:
        size = x.shape[-2:]
        features = [branch(x) for branch in self.branches]
        features.append(F.interpolate(self.pool(x), size=size, mode="bilinear", align_corners=False))
        return self.project(torch.cat(features, dim=1))


class ChangeDecoder(nn.Module):
    """Maps a (d4, d1) pair to two-class change logits."""

    def __init__(self, d1_channels: int, d4_channels: int, widths: DecoderWidths):
        super().__init__()
        self.d1_channels = d1_channels
        self.d4_channels = d4_channels
        self.aspp = ASPP(d4_channels, widths.aspp)
        self.reduce = conv_bn_relu(d1_channels, widths.reduce, 1)
        self.fuse = nn.Sequential(
            conv_bn_relu(widths.aspp + widths.reduce, widths.head, 3),
            conv_bn_relu(widths.head, widths.head, 3),
        )
        self.classifier = nn.Conv2d(widths.head, NUM_CLASSES, 1)

    def forward(self, d4: Tensor, d1: Tensor, output_size: Tuple[int, int] | None = None) -> Tensor:
        if d4.shape[1] != self.d4_channels or d1.shape[1] != self.d1_channels:
            raise DimensionError(
                f"decoder expects ({self.d4_channels}, {self.d1_channels}) channels, "
                f"got ({d4.shape[1]}, {d1.shape[1]})"
            )
        deep = F.interpolate(self.aspp(d4), size=d1.shape[-2:], mode="bilinear", align_corners=False)
        logits = self.classifier(self.fuse(torch.cat([deep, self.reduce(d1)], dim=1)))
        if output_size is not None and tuple(logits.shape[-2:]) != tuple(output_size):
            logits = F.interpolate(logits, size=tuple(output_size), mode="bilinear", align_corners=False)
        return logits

# gtpc/model/network.py
"""Siamese change-detection network with main, gate and auxiliary decoders."""
from dataclasses import dataclass
from typing import Literal, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from gtpc.errors import DimensionError
from gtpc.model.backbone import BackboneConfig, build_backbone
from gtpc.model.decoder import ChangeDecoder, DecoderConfig
from gtpc.model.types import FeatureBundle, difference_features

INIT_STD = 0.02


@dataclass(frozen=True)
class SiameseFeatures:
    c1_a: Tensor
    c4_a: Tensor
    c1_b: Tensor
    c4_b: Tensor


def init_parameters(module: nn.Module, seed: int) -> None:
    """Truncated-normal (std 0.02, cut at two std) convolution weights, zero biases, unit BN scales."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        for layer in module.modules():
            if isinstance(layer, (nn.Conv2d, nn.Linear)):
                nn.init.trunc_normal_(layer.weight, std=INIT_STD, a=-2 * INIT_STD, b=2 * INIT_STD)
                if layer.bias is not None:
                    nn.init.zeros_(layer.bias)
            elif isinstance(layer, nn.BatchNorm2d):
                nn.init.ones_(layer.weight)
                nn.init.zeros_(layer.bias)


class ChangeDetectionNet(nn.Module):
    """Shared siamese encoder feeding 2 + K structurally identical decoders.

    The main decoder is the deployed predictor; the gate decoder scores samples for
    perturbation; the auxiliary decoders each consume one perturbed feature set during
    training only.
    """

    def __init__(self, backbone: BackboneConfig, decoder: DecoderConfig | None = None, num_aux: int = 7):
        super().__init__()
        if num_aux < 0:
            raise ValueError("num_aux must be non-negative")
        decoder = decoder or DecoderConfig()
        self.backbone_config = backbone
        self.decoder_config = decoder
        self.backbone = build_backbone(backbone)
        c1, c4 = backbone.channels
        widths = decoder.resolve(backbone.kind)
        self.main_decoder = ChangeDecoder(c1, c4, widths)
        self.gate_decoder = ChangeDecoder(c1, c4, widths)
        self.aux_decoders = nn.ModuleList(ChangeDecoder(c1, c4, widths) for _ in range(num_aux))
        init_parameters(self.main_decoder, backbone.init_seed)
        init_parameters(self.gate_decoder, backbone.init_seed + 1)
        for k, aux in enumerate(self.aux_decoders, start=2):
            init_parameters(aux, backbone.init_seed + k)
        if not backbone.pretrained:
            init_parameters(self.backbone, backbone.init_seed + 1000)

    @property
    def num_aux(self) -> int:
        return len(self.aux_decoders)

    def encode_siamese(self, image_a: Tensor, image_b: Tensor) -> SiameseFeatures:
        if image_a.shape != image_b.shape:
            raise DimensionError(f"temporal images differ: {tuple(image_a.shape)} vs {tuple(image_b.shape)}")
        height, width = image_a.shape[-2:]
        stride = self.backbone_config.strides[1]
        if height % stride or width % stride:
            raise DimensionError(f"input size {height}x{width} is not divisible by the backbone stride {stride}")
        # two passes through one module keep the encoding exactly symmetric
        c1_a, c4_a = self.backbone(image_a)
        c1_b, c4_b = self.backbone(image_b)
        return SiameseFeatures(c1_a, c4_a, c1_b, c4_b)

    def extract(self, image_a: Tensor, image_b: Tensor) -> FeatureBundle:
        features = self.encode_siamese(image_a, image_b)
        return FeatureBundle(
            d1=difference_features(features.c1_a, features.c1_b),
            d4=difference_features(features.c4_a, features.c4_b),
        )

    def decode_main(self, bundle: FeatureBundle, output_size: Tuple[int, int] | None = None) -> Tensor:
        return self.main_decoder(bundle.d4, bundle.d1, output_size)

    def decode_gate(self, bundle: FeatureBundle, output_size: Tuple[int, int] | None = None) -> Tensor:
        return self.gate_decoder(bundle.d4, bundle.d1, output_size)

    def decode_aux(self, d4: Tensor, d1: Tensor, k: int, output_size: Tuple[int, int] | None = None) -> Tensor:
        """Decodes with auxiliary branch ``k`` (1-based)."""
        if not 1 <= k <= self.num_aux:
            raise IndexError(f"auxiliary decoder {k} out of range 1..{self.num_aux}")
        return self.aux_decoders[k - 1](d4, d1, output_size)

    def forward(self, image_a: Tensor, image_b: Tensor) -> Tensor:
        return self.decode_main(self.extract(image_a, image_b), tuple(image_a.shape[-2:]))

    def change_probability(self, image_a: Tensor, image_b: Tensor) -> Tensor:
        """Per-pixel probability of change, shape (B, H, W)."""
        return F.softmax(self(image_a, image_b), dim=1)[:, 1]


def count_parameters(model: ChangeDetectionNet, scope: Literal["deployed", "all"] = "deployed") -> int:
    """Parameters of the encoder, main and gate decoders, or of every module when ``scope='all'``."""
    if scope == "all":
        modules = [model]
    elif scope == "deployed":
        modules = [model.backbone, model.main_decoder, model.gate_decoder]
    else:
        raise ValueError(f"unknown parameter scope {scope!r}")
    return sum(p.numel() for module in modules for p in module.parameters())

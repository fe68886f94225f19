# gtpc/model/types.py
from dataclasses import dataclass, replace

import torch
from torch import Tensor

from gtpc.errors import DimensionError


@dataclass(frozen=True)
class ImagePair:
    """A co-registered bi-temporal sample.

    ``image_a``/``image_b`` are float tensors of shape (3, H, W) in [0, 1]; ``label`` is an
    optional long tensor (H, W) with 0 = unchanged and 1 = changed.
    """

    image_a: Tensor
    image_b: Tensor
    label: Tensor | None = None
    id: str = ""

    def __post_init__(self):
        if self.image_a.dim() != 3 or self.image_a.shape[0] != 3:
            raise DimensionError(f"{self.id or 'sample'}: expected image of shape (3, H, W), got {tuple(self.image_a.shape)}")
        if self.image_a.shape != self.image_b.shape:
            raise DimensionError(
                f"{self.id or 'sample'}: temporal images differ in shape "
                f"{tuple(self.image_a.shape)} vs {tuple(self.image_b.shape)}"
            )
        if self.label is not None and tuple(self.label.shape) != tuple(self.image_a.shape[-2:]):
            raise DimensionError(
                f"{self.id or 'sample'}: label shape {tuple(self.label.shape)} does not match image "
                f"{tuple(self.image_a.shape[-2:])}"
            )
        if self.label is not None and self.label.numel() and ((self.label < 0) | (self.label > 1)).any():
            raise DimensionError(f"{self.id or 'sample'}: label values must be 0 or 1")

    @property
    def size(self) -> tuple[int, int]:
        return int(self.image_a.shape[-2]), int(self.image_a.shape[-1])

    @property
    def is_labeled(self) -> bool:
        return self.label is not None

    def replace(self, **changes) -> "ImagePair":
        return replace(self, **changes)


@dataclass(frozen=True)
class FeatureBundle:
    """Difference features fed to every decoder: shallow ``d1`` (stride 4) and deep ``d4`` (stride 32)."""

    d1: Tensor
    d4: Tensor

    def __post_init__(self):
        if self.d1.shape[0] != self.d4.shape[0]:
            raise DimensionError(f"bundle batch sizes differ: {self.d1.shape[0]} vs {self.d4.shape[0]}")
        if self.d1.shape[-1] <= self.d4.shape[-1] or self.d1.shape[-2] <= self.d4.shape[-2]:
            raise DimensionError(
                f"d1 {tuple(self.d1.shape[-2:])} must be strictly finer than d4 {tuple(self.d4.shape[-2:])}"
            )

    def detach(self) -> "FeatureBundle":
        return FeatureBundle(d1=self.d1.detach(), d4=self.d4.detach())

    @property
    def batch_size(self) -> int:
        return int(self.d1.shape[0])


def difference_features(features_a: Tensor, features_b: Tensor) -> Tensor:
    """Element-wise absolute difference of two siamese feature maps."""
    if features_a.shape != features_b.shape:
        raise DimensionError(f"feature maps differ in shape: {tuple(features_a.shape)} vs {tuple(features_b.shape)}")
    return torch.abs(features_a - features_b)

# gtpc/augment/geometric.py
"""Weak (geometric) augmentation applied identically to both temporal images and the label."""
from dataclasses import dataclass
from typing import Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from gtpc.model.types import ImagePair


@dataclass(frozen=True)
class WeakGeometry:
    """One draw of the weak transform: rescale, reflect-pad to the crop, crop, optional flip."""

    resized: Tuple[int, int]
    padding: Tuple[int, int, int, int]
    crop_top: int
    crop_left: int
    crop_size: Tuple[int, int]
    flip: bool


def sample_weak_geometry(
    height: int,
    width: int,
    generator: torch.Generator,
    crop_size: Tuple[int, int] | None = None,
    scale_range: Tuple[float, float] = (0.5, 2.0),
    flip_prob: float = 0.5,
) -> WeakGeometry:
    crop_h, crop_w = crop_size or (height, width)
    low, high = scale_range
    scale = low + (high - low) * torch.rand((), generator=generator).item()
    resized_h, resized_w = max(1, round(height * scale)), max(1, round(width * scale))
    pad_h, pad_w = max(0, crop_h - resized_h), max(0, crop_w - resized_w)
    padding = (pad_w // 2, pad_w - pad_w // 2, pad_h // 2, pad_h - pad_h // 2)
    top = int(torch.randint(0, resized_h + pad_h - crop_h + 1, (1,), generator=generator).item())
    left = int(torch.randint(0, resized_w + pad_w - crop_w + 1, (1,), generator=generator).item())
    flip = torch.rand((), generator=generator).item() < flip_prob
    return WeakGeometry((resized_h, resized_w), padding, top, left, (crop_h, crop_w), flip)


def _reflect_pad(x: Tensor, padding: Tuple[int, int, int, int]) -> Tensor:
    # reflect padding is limited to size - 1 per call, so grow in rounds
    left, right, top, bottom = padding
    while left or right or top or bottom:
        h, w = x.shape[-2:]
        step = (min(left, w - 1), min(right, w - 1), min(top, h - 1), min(bottom, h - 1))
        if max(step) == 0:
            x = F.pad(x, (left, right, top, bottom), mode="replicate")
            break
        x = F.pad(x, step, mode="reflect")
        left, right, top, bottom = (left - step[0], right - step[1], top - step[2], bottom - step[3])
    return x


def apply_geometry(x: Tensor, geometry: WeakGeometry, is_mask: bool = False) -> Tensor:
    """Applies a sampled transform to a (C, H, W) image or an (H, W) mask."""
    batch = x.unsqueeze(0).unsqueeze(0).float() if is_mask else x.unsqueeze(0)
    if tuple(batch.shape[-2:]) != geometry.resized:
        if is_mask:
            batch = F.interpolate(batch, size=geometry.resized, mode="nearest-exact")
        else:
            antialias = geometry.resized[0] < batch.shape[-2]
            batch = F.interpolate(
                batch, size=geometry.resized, mode="bilinear", align_corners=False, antialias=antialias
            )
    batch = _reflect_pad(batch, geometry.padding)
    crop_h, crop_w = geometry.crop_size
    batch = batch[..., geometry.crop_top : geometry.crop_top + crop_h, geometry.crop_left : geometry.crop_left + crop_w]
    if geometry.flip:
        batch = torch.flip(batch, dims=(-1,))
    if is_mask:
        return batch[0, 0].round().to(x.dtype)
    return batch[0]


def weak_augment(
    pair: ImagePair,
    generator: torch.Generator,
    crop_size: int | Tuple[int, int] | None = None,
    scale_range: Tuple[float, float] = (0.5, 2.0),
    flip_prob: float = 0.5,
) -> ImagePair:
    """Random rescale, crop and horizontal flip with one parameter draw shared by A, B and the label."""
    if isinstance(crop_size, int):
        crop_size = (crop_size, crop_size)
    height, width = pair.size
    geometry = sample_weak_geometry(height, width, generator, crop_size, scale_range, flip_prob)
    return pair.replace(
        image_a=apply_geometry(pair.image_a, geometry),
        image_b=apply_geometry(pair.image_b, geometry),
        label=None if pair.label is None else apply_geometry(pair.label, geometry, is_mask=True),
    )


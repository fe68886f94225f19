# gtpc/augment/cutmix.py
"""Batch-level CutMix of strong views with their pseudo-labels."""
import math
from dataclasses import dataclass
from typing import Tuple

import torch
from torch import Tensor


@dataclass(frozen=True)
class CutMixResult:
    """Mixed images and targets; ``donor[i]`` is the source row for sample i, or -1 if unmixed."""

    image_a: Tensor
    image_b: Tensor
    pseudo_label: Tensor
    confidence: Tensor | None
    mask: Tensor
    donor: Tensor


def sample_box(
    height: int,
    width: int,
    generator: torch.Generator,
    area_range: Tuple[float, float] = (0.1, 0.5),
) -> Tuple[int, int, int, int]:
    """A box (top, left, h, w) covering a uniform fraction of the image in ``area_range``."""
    low, high = area_range
    side = math.sqrt(low + (high - low) * torch.rand((), generator=generator).item())
    box_h = min(height, max(1, round(height * side)))
    box_w = min(width, max(1, round(width * side)))
    top = int(torch.randint(0, height - box_h + 1, (1,), generator=generator).item())
    left = int(torch.randint(0, width - box_w + 1, (1,), generator=generator).item())
    return top, left, box_h, box_w


def derangement(batch_size: int, generator: torch.Generator) -> Tensor:
    """A random permutation with no fixed points (a single random cycle)."""
    order = torch.randperm(batch_size, generator=generator)
    donor = torch.empty(batch_size, dtype=torch.long)
    donor[order] = torch.roll(order, shifts=-1)
    return donor


def cutmix_batch(
    image_a: Tensor,
    image_b: Tensor,
    pseudo_label: Tensor,
    generator: torch.Generator,
    prob: float = 0.5,
    area_range: Tuple[float, float] = (0.1, 0.5),
    confidence: Tensor | None = None,
) -> CutMixResult:
    """Pastes one box from a different batch member into each selected sample.

    The same box is cut from both temporal images and from the pseudo-label, so the
    target stays aligned with the pixels. A batch of one is returned unmixed.
    """
    batch, _, height, width = image_a.shape
    mask = torch.zeros(batch, height, width, dtype=torch.long)
    donor = torch.full((batch,), -1, dtype=torch.long)
    if batch > 1:
        partners = derangement(batch, generator)
        for i in range(batch):
            if torch.rand((), generator=generator).item() >= prob:
                continue
            top, left, box_h, box_w = sample_box(height, width, generator, area_range)
            mask[i, top : top + box_h, left : left + box_w] = 1
            donor[i] = partners[i]
    mask = mask.to(image_a.device)
    if (donor < 0).all():
        return CutMixResult(image_a, image_b, pseudo_label, confidence, mask, donor)
    source = donor.clamp(min=0).to(image_a.device)
    pixel = mask.bool()
    return CutMixResult(
        image_a=torch.where(pixel.unsqueeze(1), image_a[source], image_a),
        image_b=torch.where(pixel.unsqueeze(1), image_b[source], image_b),
        pseudo_label=torch.where(pixel, pseudo_label[source], pseudo_label),
        confidence=None if confidence is None else torch.where(pixel, confidence[source], confidence),
        mask=mask,
        donor=donor,
    )

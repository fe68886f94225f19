# gtpc/augment/photometric.py
"""Strong (photometric) augmentation; labels are never touched."""
import math
from typing import Tuple

import torch
import torchvision.transforms.functional as TF
from torch import Tensor

from gtpc.model.types import ImagePair


def _uniform(generator: torch.Generator, low: float, high: float) -> float:
    return low + (high - low) * torch.rand((), generator=generator).item()


def color_jitter(
    image: Tensor,
    generator: torch.Generator,
    jitter_range: Tuple[float, float] = (0.6, 1.4),
    prob: float = 0.8,
) -> Tensor:
    """Brightness, contrast and saturation factors drawn independently from ``jitter_range``."""
    if torch.rand((), generator=generator).item() >= prob:
        return image
    low, high = jitter_range
    image = TF.adjust_brightness(image, _uniform(generator, low, high))
    image = TF.adjust_contrast(image, _uniform(generator, low, high))
    return TF.adjust_saturation(image, _uniform(generator, low, high))


def gaussian_blur(
    image: Tensor,
    generator: torch.Generator,
    sigma_range: Tuple[float, float] = (0.1, 2.0),
    prob: float = 0.5,
) -> Tensor:
    if torch.rand((), generator=generator).item() >= prob:
        return image
    sigma = _uniform(generator, *sigma_range)
    kernel = 2 * math.ceil(3 * sigma) + 1
    return TF.gaussian_blur(image, kernel_size=[kernel, kernel], sigma=[sigma, sigma])


def strong_augment(
    pair: ImagePair,
    generator: torch.Generator,
    jitter_range: Tuple[float, float] = (0.6, 1.4),
    jitter_prob: float = 0.8,
    blur_sigma: Tuple[float, float] = (0.1, 2.0),
    blur_prob: float = 0.5,
) -> ImagePair:
    """Independent colour jitter and blur per temporal image, clamped to [0, 1]."""
    images = []
    for image in (pair.image_a, pair.image_b):
        image = color_jitter(image, generator, jitter_range, jitter_prob)
        image = gaussian_blur(image, generator, blur_sigma, blur_prob)
        images.append(image.clamp(0.0, 1.0))
    return pair.replace(image_a=images[0], image_b=images[1])

# gtpc/augment/views.py
from dataclasses import dataclass

import torch

from gtpc.augment.geometric import weak_augment
from gtpc.augment.photometric import strong_augment
from gtpc.config import AugmentConfig
from gtpc.model.types import ImagePair


@dataclass(frozen=True)
class AugmentedViews:
    """A weak view and two independently strong-augmented copies of it."""

    weak: ImagePair
    strong1: ImagePair
    strong2: ImagePair


def weak_view(pair: ImagePair, generator: torch.Generator, config: AugmentConfig) -> ImagePair:
    return weak_augment(pair, generator, config.crop_size, config.scale_range, config.flip_prob)


def make_views(pair: ImagePair, generator: torch.Generator, config: AugmentConfig) -> AugmentedViews:
    weak = weak_view(pair, generator, config)
    strong = [
        strong_augment(weak, generator, config.jitter_range, config.jitter_prob, config.blur_sigma, config.blur_prob)
        for _ in range(2)
    ]
    return AugmentedViews(weak=weak, strong1=strong[0], strong2=strong[1])

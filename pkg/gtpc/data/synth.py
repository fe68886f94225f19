# gtpc/data/synth.py
"""Synthetic bi-temporal scenes with pixel-exact change labels.

A scene is a smooth textured background with non-overlapping rectangles and ellipses.
The second acquisition removes some shapes, adds new ones and applies a global
gain/bias drift, so the change label is the union of removed and added footprints.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
import torch
from scipy.ndimage import binary_dilation, gaussian_filter

from gtpc.data.dataset import save_pair
from gtpc.model.types import ImagePair
from gtpc.utils.seeding import numpy_rng

ZERO_CHANGE_EVERY = 10
MIN_PREVALENCE = 0.02
MAX_PREVALENCE = 0.30


@dataclass
class SynthScene:
    image_a: np.ndarray
    image_b: np.ndarray
    footprint_a: np.ndarray
    footprint_b: np.ndarray

    @property
    def label(self) -> np.ndarray:
        return np.logical_xor(self.footprint_a, self.footprint_b)

    def to_pair(self, sample_id: str) -> ImagePair:
        return ImagePair(
            image_a=torch.from_numpy(self.image_a.astype(np.float32)),
            image_b=torch.from_numpy(self.image_b.astype(np.float32)),
            label=torch.from_numpy(self.label.astype(np.int64)),
            id=sample_id,
        )


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.25, 0.6, size=(3, 1, 1))
    texture = gaussian_filter(rng.normal(0.0, 1.0, size=(size, size)), sigma=2.0)
    texture = 0.08 * texture / (np.abs(texture).max() + 1e-8)
    ramp = np.linspace(-0.05, 0.05, size)[None, :] * rng.choice([-1.0, 1.0])
    return base + texture[None] + ramp[None]


def _shape(rng: np.random.Generator, size: int, occupied: np.ndarray) -> np.ndarray | None:
    yy, xx = np.mgrid[:size, :size]
    for _ in range(50):
        h, w = rng.integers(size // 8, size // 4 + 1, size=2)
        top, left = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        if rng.random() < 0.5:
            footprint = (yy >= top) & (yy < top + h) & (xx >= left) & (xx < left + w)
        else:
            cy, cx = top + (h - 1) / 2, left + (w - 1) / 2
            footprint = ((yy - cy) / (h / 2)) ** 2 + ((xx - cx) / (w / 2)) ** 2 <= 1.0
        if not (footprint & occupied).any():
            return footprint
    return None


def _paint(image: np.ndarray, footprints, colors) -> np.ndarray:
    image = image.copy()
    for footprint, color in zip(footprints, colors):
        image[:, footprint] = color[:, None]
    return image


def synth_scene(rng: np.random.Generator, size: int, zero_change: bool = False) -> SynthScene:
    background = _background(rng, size)
    occupied = np.zeros((size, size), dtype=bool)
    shapes: List[np.ndarray] = []
    colors: List[np.ndarray] = []

    def add_shape() -> bool:
        footprint = _shape(rng, size, binary_dilation(occupied))
        if footprint is None:
            return False
        color = rng.uniform(0.0, 1.0, size=3)
        while np.abs(color - background[:, 0, 0]).max() < 0.3:
            color = rng.uniform(0.0, 1.0, size=3)
        occupied[footprint] = True
        shapes.append(footprint)
        colors.append(color)
        return True

    for _ in range(rng.integers(2, 6)):
        add_shape()
    persistent = list(range(len(shapes)))
    removed: List[int] = []
    added: List[int] = []
    if not zero_change:
        changed = np.zeros((size, size), dtype=bool)
        for _ in range(100):
            prevalence = changed.mean()
            if prevalence >= MIN_PREVALENCE and (rng.random() < 0.5 or len(removed) + len(added) >= 4):
                break
            if persistent and rng.random() < 0.35:
                index = persistent[rng.integers(len(persistent))]
                if (changed | shapes[index]).mean() > MAX_PREVALENCE:
                    continue
                persistent.remove(index)
                removed.append(index)
                changed |= shapes[index]
            elif add_shape():
                if (changed | shapes[-1]).mean() > MAX_PREVALENCE:
                    occupied[shapes.pop()] = False
                    colors.pop()
                    continue
                added.append(len(shapes) - 1)
                changed |= shapes[-1]

    in_a = persistent + removed
    in_b = persistent + added
    image_a = _paint(background, [shapes[i] for i in in_a], [colors[i] for i in in_a])
    image_b = _paint(background, [shapes[i] for i in in_b], [colors[i] for i in in_b])
    gain = rng.uniform(0.85, 1.15, size=(3, 1, 1))
    bias = rng.uniform(-0.05, 0.05, size=(3, 1, 1))
    image_b = image_b * gain + bias
    image_a = image_a + rng.normal(0.0, 0.01, size=image_a.shape)
    image_b = image_b + rng.normal(0.0, 0.01, size=image_b.shape)
    footprint_a = np.zeros((size, size), dtype=bool)
    footprint_b = np.zeros((size, size), dtype=bool)
    for i in in_a:
        footprint_a |= shapes[i]
    for i in in_b:
        footprint_b |= shapes[i]
    return SynthScene(np.clip(image_a, 0.0, 1.0), np.clip(image_b, 0.0, 1.0), footprint_a, footprint_b)


def synth_generate(n: int, size: int = 64, seed: int = 0) -> List[ImagePair]:
    """``n`` scenes; every tenth one (index 9, 19, ...) has no change at all."""
    if n < 1:
        raise ValueError("n must be positive")
    return [
        synth_scene(numpy_rng(seed, i), size, zero_change=(i % ZERO_CHANGE_EVERY == ZERO_CHANGE_EVERY - 1)).to_pair(
            f"synth_{i:05d}"
        )
        for i in range(n)
    ]


def write_dataset(samples: List[ImagePair], root: str | Path) -> Path:
    root = Path(root)
    for sample in samples:
        save_pair(sample, root)
    return root

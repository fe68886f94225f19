# gtpc/data/loaders.py
"""Torch datasets and collation for the labeled, unlabeled and evaluation streams.

Augmentation randomness for sample ``i`` in pass ``p`` of a stream comes from its own
generator derived from (seed, stream, p, i), so batches do not depend on worker count.
"""
from dataclasses import dataclass, fields
from typing import Callable, List, Sequence

import torch
from torch import Tensor
from torch.utils.data import DataLoader, Dataset

from gtpc.augment.views import AugmentedViews, make_views, weak_view
from gtpc.config import AugmentConfig
from gtpc.model.types import ImagePair
from gtpc.utils.seeding import stream_generator

LABELED_STREAM = 1
UNLABELED_STREAM = 2
SHUFFLE_STREAM = 3
TRAIN_STEP_STREAM = 4


@dataclass
class LabeledBatch:
    image_a: Tensor
    image_b: Tensor
    label: Tensor
    ids: List[str]

    def to(self, device) -> "LabeledBatch":
        return LabeledBatch(self.image_a.to(device), self.image_b.to(device), self.label.to(device), self.ids)

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class UnlabeledBatch:
    weak_a: Tensor
    weak_b: Tensor
    strong1_a: Tensor
    strong1_b: Tensor
    strong2_a: Tensor
    strong2_b: Tensor
    ids: List[str]

    def to(self, device) -> "UnlabeledBatch":
        moved = {f.name: getattr(self, f.name).to(device) for f in fields(self) if f.name != "ids"}
        return UnlabeledBatch(**moved, ids=self.ids)

    def __len__(self) -> int:
        return len(self.ids)


class _PassAware(Dataset):
    """A dataset whose per-sample augmentation changes with every pass over it."""

    def __init__(self, samples: Sequence[ImagePair], config: AugmentConfig, seed: int, stream: int):
        self.samples = list(samples)
        self.config = config
        self.seed = seed
        self.stream = stream
        self.pass_index = 0

    def set_pass(self, pass_index: int) -> None:
        self.pass_index = pass_index

    def _generator(self, index: int) -> torch.Generator:
        return stream_generator(self.seed, self.stream, self.pass_index, index)

    def __len__(self) -> int:
        return len(self.samples)


class LabeledPairs(_PassAware):
    def __init__(self, samples: Sequence[ImagePair], config: AugmentConfig, seed: int):
        unlabeled = [s.id for s in samples if s.label is None]
        if unlabeled:
            raise ValueError(f"labeled stream got samples without labels: {unlabeled[:3]}")
        super().__init__(samples, config, seed, LABELED_STREAM)

    def __getitem__(self, index: int) -> ImagePair:
        return weak_view(self.samples[index], self._generator(index), self.config)


class UnlabeledPairs(_PassAware):
    def __init__(self, samples: Sequence[ImagePair], config: AugmentConfig, seed: int):
        super().__init__([s.replace(label=None) for s in samples], config, seed, UNLABELED_STREAM)

    def __getitem__(self, index: int) -> AugmentedViews:
        return make_views(self.samples[index], self._generator(index), self.config)


def collate_pairs(pairs: List[ImagePair]) -> LabeledBatch:
    return LabeledBatch(
        image_a=torch.stack([p.image_a for p in pairs]),
        image_b=torch.stack([p.image_b for p in pairs]),
        label=torch.stack([p.label for p in pairs]).long(),
        ids=[p.id for p in pairs],
    )


def collate_views(views: List[AugmentedViews]) -> UnlabeledBatch:
    return UnlabeledBatch(
        weak_a=torch.stack([v.weak.image_a for v in views]),
        weak_b=torch.stack([v.weak.image_b for v in views]),
        strong1_a=torch.stack([v.strong1.image_a for v in views]),
        strong1_b=torch.stack([v.strong1.image_b for v in views]),
        strong2_a=torch.stack([v.strong2.image_a for v in views]),
        strong2_b=torch.stack([v.strong2.image_b for v in views]),
        ids=[v.weak.id for v in views],
    )


def build_loader(
    dataset: Dataset,
    batch_size: int,
    collate: Callable,
    seed: int,
    shuffle: bool = True,
    drop_last: bool = False,
    num_workers: int = 0,
) -> DataLoader:
    generator = stream_generator(seed, SHUFFLE_STREAM, getattr(dataset, "stream", 0))
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        drop_last=drop_last,
        collate_fn=collate,
        num_workers=num_workers,
        generator=generator,
        persistent_workers=False,
    )


def iterate_batches(samples: Sequence[ImagePair], batch_size: int):
    """Unaugmented evaluation batches in the given order."""
    for start in range(0, len(samples), batch_size):
        yield collate_pairs(list(samples[start : start + batch_size]))

# gtpc/engine/evaluation.py
"""Change-class metrics from global confusion counts."""
from typing import Iterator, Sequence, Tuple

import torch
from pydantic import BaseModel, Field, computed_field
from torch import Tensor

from gtpc.data.loaders import iterate_batches
from gtpc.errors import DimensionError
from gtpc.model.network import ChangeDetectionNet
from gtpc.model.types import ImagePair


def _ratio(numerator: int, denominator: int, empty: float) -> float:
    return numerator / denominator if denominator else empty


class Metrics(BaseModel):
    """Confusion counts of the change class and the scores derived from them.

    IoU is defined as 1.0 when neither prediction nor label contain change.
    """

    tp: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)

    @computed_field
    @property
    def iou(self) -> float:
        return _ratio(self.tp, self.tp + self.fp + self.fn, 1.0)

    @computed_field
    @property
    def oa(self) -> float:
        return _ratio(self.tp + self.tn, self.total, 1.0)

    @computed_field
    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp, 1.0 if self.fn == 0 else 0.0)

    @computed_field
    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn, 1.0 if self.fp == 0 else 0.0)

    @computed_field
    @property
    def f1(self) -> float:
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn, 1.0)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(tp=self.tp + other.tp, tn=self.tn + other.tn, fp=self.fp + other.fp, fn=self.fn + other.fn)

    @classmethod
    def from_predictions(cls, prediction: Tensor, label: Tensor) -> "Metrics":
        """Counts over every pixel; label pixels equal to 255 are skipped."""
        if prediction.shape != label.shape:
            raise DimensionError(f"prediction {tuple(prediction.shape)} vs label {tuple(label.shape)}")
        valid = label != 255
        predicted = prediction.bool() & valid
        actual = (label == 1) & valid
        return cls(
            tp=int((predicted & actual).sum()),
            tn=int((~predicted & ~actual & valid).sum()),
            fp=int((predicted & ~actual).sum()),
            fn=int((~predicted & actual).sum()),
        )

    def summary(self) -> str:
        return f"IoU {100 * self.iou:.2f} | OA {100 * self.oa:.2f} | F1 {100 * self.f1:.2f}"


@torch.no_grad()
def predict_masks(
    model: ChangeDetectionNet,
    samples: Sequence[ImagePair],
    batch_size: int = 8,
    threshold: float = 0.5,
    device: str | torch.device = "cpu",
) -> Iterator[Tuple[ImagePair, Tensor]]:
    """Yields each sample with its binary change prediction (H, W)."""
    was_training = model.training
    model.eval()
    try:
        offset = 0
        for batch in iterate_batches(samples, batch_size):
            probability = model.change_probability(batch.image_a.to(device), batch.image_b.to(device)).cpu()
            for i in range(len(batch)):
                yield samples[offset + i], probability[i] > threshold
            offset += len(batch)
    finally:
        model.train(was_training)


def evaluate(
    model: ChangeDetectionNet,
    samples: Sequence[ImagePair],
    batch_size: int = 8,
    threshold: float = 0.5,
    device: str | torch.device = "cpu",
) -> Metrics:
    """Accumulates TP/TN/FP/FN over all pixels of ``samples`` at the given threshold."""
    if not samples:
        raise ValueError("cannot evaluate an empty sample set")
    missing = [s.id for s in samples if s.label is None]
    if missing:
        raise ValueError(f"evaluation needs labels; missing for {missing[:3]}")
    metrics = Metrics()
    for sample, prediction in predict_masks(model, samples, batch_size, threshold, device):
        metrics = metrics + Metrics.from_predictions(prediction, sample.label)
    return metrics

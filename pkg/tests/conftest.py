# tests/conftest.py
import pytest
import torch

from gtpc.config import ExperimentConfig
from gtpc.data.synth import synth_generate
from gtpc.model.backbone import BackboneConfig
from gtpc.model.network import ChangeDetectionNet
from gtpc.model.types import ImagePair


def make_pair(size: int = 64, seed: int = 0, labeled: bool = True, sample_id: str = "pair") -> ImagePair:
    generator = torch.Generator().manual_seed(seed)
    image_a = torch.rand(3, size, size, generator=generator)
    image_b = torch.rand(3, size, size, generator=generator)
    label = (torch.rand(size, size, generator=generator) > 0.8).long() if labeled else None
    return ImagePair(image_a, image_b, label, id=sample_id)


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def tiny_model():
    return ChangeDetectionNet(BackboneConfig(kind="tiny", init_seed=0), num_aux=7)


@pytest.fixture
def small_config():
    """A gtpc config small enough for a few CPU steps."""
    return ExperimentConfig.model_validate(
        {
            "epochs": 1,
            "batch_labeled": 2,
            "batch_unlabeled": 4,
            "data": {"synthetic": {"n": 40, "size": 64, "seed": 0}, "patch_size": 64, "ratio": 0.2},
        }
    )


@pytest.fixture(scope="session")
def synthetic_samples():
    return {sample.id: sample for sample in synth_generate(40, 64, seed=0)}

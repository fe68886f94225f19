# gtpc/utils/seeding.py
"""Seeding helpers.

Every random draw in the package goes through a ``torch.Generator`` or a numpy
``Generator`` derived from the experiment seed plus a tuple of stream keys, so
results depend on (seed, keys) and never on global state or worker scheduling.
"""
import random

import numpy as np
import torch


def seed_everything(seed: int, deterministic: bool = True, num_threads: int | None = None) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if num_threads:
        torch.set_num_threads(num_threads)
    torch.use_deterministic_algorithms(deterministic, warn_only=True)
    torch.backends.cudnn.benchmark = not deterministic
    torch.backends.cudnn.deterministic = deterministic


def _entropy(seed: int, keys: tuple[int, ...]) -> int:
    sequence = np.random.SeedSequence([seed, *keys])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def stream_generator(seed: int, *keys: int) -> torch.Generator:
    """A CPU torch generator for the stream identified by ``keys``."""
    generator = torch.Generator()
    generator.manual_seed(_entropy(seed, keys))
    return generator


def numpy_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))

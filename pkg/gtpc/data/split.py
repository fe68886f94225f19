# gtpc/data/split.py
import math
from pathlib import Path
from typing import Iterable, List, Mapping

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from gtpc.errors import DatasetError, SplitError

SCHEMA_VERSION = 1


class SplitManifest(BaseModel):
    """Disjoint labeled / unlabeled / val / test id lists of one experiment."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    ratio: float = Field(gt=0.0, lt=1.0)
    seed: int
    labeled_ids: List[str]
    unlabeled_ids: List[str]
    val_ids: List[str] = Field(default_factory=list)
    test_ids: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _disjoint(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported manifest schema version {self.schema_version}")
        seen: set[str] = set()
        for name in ("labeled_ids", "unlabeled_ids", "val_ids", "test_ids"):
            ids = getattr(self, name)
            overlap = seen.intersection(ids)
            if overlap or len(set(ids)) != len(ids):
                raise ValueError(f"{name} overlaps another subset or repeats ids: {sorted(overlap)[:5]}")
            seen.update(ids)
        return self

    @property
    def train_ids(self) -> List[str]:
        return sorted(self.labeled_ids + self.unlabeled_ids)

    def check_against(self, available: Iterable[str]) -> None:
        missing = sorted(set(self.labeled_ids + self.unlabeled_ids + self.val_ids + self.test_ids) - set(available))
        if missing:
            raise DatasetError(f"manifest references {len(missing)} unknown sample(s), e.g. {missing[:3]}")

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        path = Path(path)
        if not path.exists():
            raise DatasetError(f"manifest {path} does not exist")
        return cls.model_validate(yaml.safe_load(path.read_text()))


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def make_split(
    ids: Iterable[str],
    ratio: float,
    seed: int,
    val_fraction: float = 0.0,
    test_fraction: float = 0.0,
    subsets: Mapping[str, str] | None = None,
) -> SplitManifest:
    """Uniform labeled/unlabeled split of the training pool, deterministic under ``seed``.

    With ``subsets`` (predefined train/val/test membership) only ids marked ``train`` are
    split and val/test come from the predefinition; otherwise val and test are first carved
    from the shuffled ids by the given fractions.
    """
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"ratio must lie in (0, 1), got {ratio}")
    ids = sorted(set(ids))
    rng = np.random.default_rng(seed)
    if subsets:
        pool = [i for i in ids if subsets.get(i, "train") == "train"]
        val_ids = [i for i in ids if subsets.get(i) == "val"]
        test_ids = [i for i in ids if subsets.get(i) == "test"]
    else:
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        n_test = _round_half_up(len(ids) * test_fraction)
        n_val = _round_half_up(len(ids) * val_fraction)
        test_ids = shuffled[:n_test]
        val_ids = shuffled[n_test : n_test + n_val]
        pool = sorted(shuffled[n_test + n_val :])
    n_labeled = _round_half_up(len(pool) * ratio)
    if n_labeled == 0:
        raise SplitError(f"ratio {ratio} of {len(pool)} training samples leaves no labeled sample")
    if n_labeled == len(pool):
        raise SplitError(f"ratio {ratio} of {len(pool)} training samples leaves no unlabeled sample")
    chosen = set(pool[i] for i in rng.permutation(len(pool))[:n_labeled])
    return SplitManifest(
        ratio=ratio,
        seed=seed,
        labeled_ids=sorted(chosen),
        unlabeled_ids=[i for i in pool if i not in chosen],
        val_ids=sorted(val_ids),
        test_ids=sorted(test_ids),
    )

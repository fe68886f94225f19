# gtpc/config.py
import hashlib
import json
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from gtpc.data.dataset import DatasetDescriptor
from gtpc.errors import ConfigError
from gtpc.model.backbone import BackboneConfig
from gtpc.model.decoder import DecoderConfig
from gtpc.perturb.specs import PerturbationSpec, default_perturbation_specs

# 1. Runtime settings, read from the environment (main.py loads .env first)
DEVICE = os.getenv("GTPC_DEVICE", "cpu")
NUM_THREADS = int(os.getenv("GTPC_NUM_THREADS", "1"))
NUM_WORKERS = int(os.getenv("GTPC_NUM_WORKERS", "0"))
OUT_DIR = os.getenv("GTPC_OUT_DIR", "runs")
DETERMINISTIC = os.getenv("GTPC_DETERMINISTIC", "true").lower() == "true"


# 2. Declarative experiment configuration
class Variant(str, Enum):
    SUP_ONLY = "sup_only"
    FEATURE = "feature"
    IMAGE = "image"
    FEATURE_IMAGE = "feature_image"
    GTPC = "gtpc"


VARIANT_LABELS = {
    Variant.SUP_ONLY: "Sup-only",
    Variant.FEATURE: "Feature",
    Variant.IMAGE: "Image",
    Variant.FEATURE_IMAGE: "Feature + Image",
    Variant.GTPC: "GTPC",
}


class FPTarget(str, Enum):
    D1 = "d1"
    D4 = "d4"
    D1_AND_D4 = "d1_and_d4"


class GateTraining(str, Enum):
    SUPERVISED = "supervised"
    PSEUDO = "pseudo"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Section):
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    decoder: DecoderConfig = Field(default_factory=DecoderConfig)


class GateConfig(_Section):
    enabled: bool = True
    quantile: float = Field(default=0.5, ge=0.0, le=1.0, description="Batch quantile of IoU scores; 0.5 is the median.")
    inverted: bool = Field(default=False, description="Perturb samples at or below the threshold instead.")
    bin_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    training: GateTraining = GateTraining.SUPERVISED
    loss_weight: float = Field(default=1.0, ge=0.0)


class PerturbConfig(_Section):
    specs: List[PerturbationSpec] = Field(
        default_factory=default_perturbation_specs,
        description="Branch k of the auxiliary decoders receives specs[k - 1].",
    )


class LossConfig(_Section):
    lambda1: float = Field(default=0.5, ge=0.0)
    lambda2: float = Field(default=0.25, ge=0.0)
    lambda3: float = Field(default=0.25, ge=0.0)
    tau: float = Field(default=0.95, gt=0.0, lt=1.0)
    confidence_masking: bool = Field(
        default=False, description="Ignore unlabeled pixels whose top-class probability is below tau."
    )
    warmup_epochs: int = Field(
        default=0, ge=0, description="Leading epochs that train on labeled data only; l_ui and l_uf log as 0."
    )

    @property
    def weights(self) -> Tuple[float, float, float]:
        return self.lambda1, self.lambda2, self.lambda3


class OptimizerConfig(_Section):
    lr: float = Field(default=0.02, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    poly_power: float | None = Field(default=None, gt=0.0, description="Polynomial lr decay; off when unset.")


class AugmentConfig(_Section):
    crop_size: int | None = Field(default=None, ge=32, description="Square crop; defaults to the sample size.")
    scale_range: Tuple[float, float] = (0.5, 2.0)
    flip_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    jitter_range: Tuple[float, float] = (0.6, 1.4)
    jitter_prob: float = Field(default=0.8, ge=0.0, le=1.0)
    blur_sigma: Tuple[float, float] = (0.1, 2.0)
    blur_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    cutmix_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    cutmix_area: Tuple[float, float] = (0.1, 0.5)

    @model_validator(mode="after")
    def _ranges(self):
        for name in ("scale_range", "jitter_range", "blur_sigma", "cutmix_area"):
            low, high = getattr(self, name)
            if not 0.0 < low <= high:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got {(low, high)}")
        if self.cutmix_area[1] > 1.0:
            raise ValueError("cutmix_area cannot exceed 1")
        if self.crop_size is not None and self.crop_size % 32:
            raise ValueError("crop_size must be divisible by 32")
        return self


class ExperimentConfig(_Section):
    """Everything that defines one training run."""

    name: str = "gtpc"
    variant: Variant = Variant.GTPC
    seed: int = Field(default=0, ge=0)
    deterministic: bool = Field(default_factory=lambda: DETERMINISTIC)
    epochs: int = Field(default=80, ge=1)
    batch_labeled: int = Field(default=4, ge=1)
    batch_unlabeled: int = Field(default=4, ge=1)
    model: ModelConfig = Field(default_factory=ModelConfig)
    gate: GateConfig = Field(default_factory=GateConfig)
    fp_target: FPTarget = FPTarget.D1
    perturb: PerturbConfig = Field(default_factory=PerturbConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    data: DatasetDescriptor = Field(default_factory=DatasetDescriptor)

    @property
    def effective_weights(self) -> Tuple[float, float, float]:
        """Loss weights the variant trains with; ``sup_only`` always uses (1, 0, 0)."""
        if self.variant is Variant.SUP_ONLY:
            return 1.0, 0.0, 0.0
        return self.loss.weights

    @property
    def num_aux(self) -> int:
        return len(self.perturb.specs)

    @property
    def uses_image(self) -> bool:
        return self.variant in (Variant.IMAGE, Variant.FEATURE_IMAGE, Variant.GTPC)

    @property
    def uses_feature(self) -> bool:
        return self.variant in (Variant.FEATURE, Variant.FEATURE_IMAGE, Variant.GTPC)

    @property
    def uses_gate(self) -> bool:
        return self.variant is Variant.GTPC and self.gate.enabled

    @property
    def uses_unlabeled(self) -> bool:
        return self.variant is not Variant.SUP_ONLY

    def active_specs(self) -> List[PerturbationSpec]:
        """Specs whose branches run this variant; empty when the feature branch is off."""
        return list(self.perturb.specs) if self.uses_feature else []


def _set_dotted(raw: Dict[str, Any], item: str) -> None:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} is not of the form key=value")
    parts = key.strip().split(".")
    node = raw
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {item!r}: {part} is not a section")
        node = child
    node[parts[-1]] = yaml.safe_load(value)


def _validate(raw: Dict[str, Any], source: str) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration ({source}):\n{exc}") from exc


def load_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Reads a YAML config (or the defaults when ``path`` is None) and applies ``key=value`` overrides."""
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path} must contain a mapping at the top level")
    for item in overrides:
        _set_dotted(raw, item)
    return _validate(raw, str(path or "defaults"))


def apply_overrides(config: ExperimentConfig, overrides: Sequence[str]) -> ExperimentConfig:
    raw = config.model_dump(mode="json")
    if any(item.partition("=")[0].strip() == "data.root" for item in overrides):
        raw["data"]["synthetic"] = None
    for item in overrides:
        _set_dotted(raw, item)
    return _validate(raw, "overrides")


def config_hash(config: ExperimentConfig) -> str:
    """First 12 hex digits of SHA-256 over the canonical JSON form of the config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

# gtpc/perturb/specs.py
from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field, model_validator


class PerturbationKind(str, Enum):
    FEATURE_NOISE = "feature_noise"
    FEATURE_DROPOUT = "feature_dropout"
    OBJECT_MASKING = "object_masking"
    CONTEXT_MASKING = "context_masking"
    GUIDED_CUTOUT = "guided_cutout"
    INTERMEDIATE_VAT = "intermediate_vat"
    RANDOM_DROPOUT = "random_dropout"


# keys double as the keyword arguments of the matching operator
DEFAULT_PARAMS: Dict[PerturbationKind, Dict[str, float]] = {
    PerturbationKind.FEATURE_NOISE: {"amplitude": 0.3},
    PerturbationKind.FEATURE_DROPOUT: {"low": 0.6, "high": 0.9},
    PerturbationKind.OBJECT_MASKING: {},
    PerturbationKind.CONTEXT_MASKING: {},
    PerturbationKind.GUIDED_CUTOUT: {"area_low": 0.1, "area_high": 0.4},
    PerturbationKind.INTERMEDIATE_VAT: {"epsilon": 2.0, "xi": 1e-6},
    PerturbationKind.RANDOM_DROPOUT: {"rate": 0.5},
}


class PerturbationSpec(BaseModel):
    """One feature-level perturbation, routed to exactly one auxiliary decoder."""

    model_config = ConfigDict(extra="forbid")

    kind: PerturbationKind
    params: Dict[str, float] = Field(
        default_factory=dict,
        description="Operator parameters; missing entries take the defaults for the kind.",
    )

    @model_validator(mode="after")
    def _fill_defaults(self):
        defaults = DEFAULT_PARAMS[self.kind]
        unknown = sorted(set(self.params) - set(defaults))
        if unknown:
            raise ValueError(f"{self.kind.value} does not take parameter(s) {', '.join(unknown)}")
        params = {**defaults, **self.params}
        if params.get("amplitude", 0.0) < 0 or params.get("epsilon", 0.0) < 0:
            raise ValueError(f"{self.kind.value}: amplitudes must be non-negative")
        if "xi" in params and params["xi"] <= 0:
            raise ValueError("intermediate_vat: xi must be positive")
        if "rate" in params and not 0.0 <= params["rate"] < 1.0:
            raise ValueError("random_dropout: rate must lie in [0, 1)")
        for low, high in (("low", "high"), ("area_low", "area_high")):
            if low in params and not 0.0 <= params[low] <= params[high] <= 1.0:
                raise ValueError(f"{self.kind.value}: expected 0 <= {low} <= {high} <= 1")
        self.params = params
        return self


def default_perturbation_specs() -> List[PerturbationSpec]:
    """The seven perturbations, one per auxiliary decoder, in branch order."""
    return [PerturbationSpec(kind=kind) for kind in PerturbationKind]

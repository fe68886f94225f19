# gtpc/perturb/gate.py
"""Gate-controlled selection of which unlabeled samples receive feature perturbation.

The gate decoder and the main decoder each predict a change map for a weakly augmented
sample; their IoU measures agreement. Samples the two decoders agree on are treated as
reliable and are the ones perturbed.
"""
from typing import List, Sequence

import torch
from pydantic import BaseModel, ConfigDict, Field
from torch import Tensor

from gtpc.errors import DimensionError


class GateVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_id: str
    iou_score: float = Field(ge=0.0, le=1.0, description="Agreement between gate and main predictions.")
    perturb: bool = Field(description="Whether the sample's features are perturbed this step.")


def gate_scores(p_gate: Tensor, p_main: Tensor, bin_threshold: float = 0.5) -> Tensor:
    """Per-sample IoU between binarised gate and main change probabilities, as float64.

    An empty union (both maps predict no change) scores 1.0.
    """
    if p_gate.shape != p_main.shape:
        raise DimensionError(f"gate and main maps differ: {tuple(p_gate.shape)} vs {tuple(p_main.shape)}")
    gate_mask = (p_gate > bin_threshold).flatten(1)
    main_mask = (p_main > bin_threshold).flatten(1)
    intersection = (gate_mask & main_mask).sum(dim=1).double()
    union = (gate_mask | main_mask).sum(dim=1).double()
    return torch.where(union > 0, intersection / union.clamp(min=1), torch.ones_like(union))


def gate_select(
    scores: Tensor | Sequence[float],
    quantile: float = 0.5,
    inverted: bool = False,
    sample_ids: Sequence[str] | None = None,
) -> List[GateVerdict]:
    """Marks samples whose score reaches the batch quantile (or falls at/below it when inverted).

    Scores equal to the threshold are always selected, so ties widen the selection. With the
    median, a batch where most samples tie (typically at 1.0, both decoders predicting no
    change) perturbs every tied sample and the perturbed share can exceed one half.
    """
    values = torch.as_tensor(scores, dtype=torch.float64).detach().cpu().flatten()
    if values.numel() == 0:
        raise ValueError("cannot gate an empty batch")
    if not 0.0 <= quantile <= 1.0:
        raise ValueError(f"quantile must lie in [0, 1], got {quantile}")
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(values.numel())]
    if len(ids) != values.numel():
        raise ValueError(f"{len(ids)} sample ids for {values.numel()} scores")
    threshold = torch.quantile(values, quantile)
    selected = values <= threshold if inverted else values >= threshold
    return [
        GateVerdict(sample_id=sample_id, iou_score=float(score), perturb=bool(flag))
        for sample_id, score, flag in zip(ids, values.tolist(), selected.tolist())
    ]


def perturb_all(sample_ids: Sequence[str]) -> List[GateVerdict]:
    """Verdicts for a disabled gate: every sample is perturbed."""
    return [GateVerdict(sample_id=sample_id, iou_score=1.0, perturb=True) for sample_id in sample_ids]

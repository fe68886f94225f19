# gtpc/losses/pseudo_label.py
from dataclasses import dataclass

import torch
from torch import Tensor

IGNORE_INDEX = 255


@dataclass(frozen=True)
class PseudoLabelMask:
    """Hard pseudo-label derived from the main decoder on a weak view.

    ``mask`` is a long tensor (B, H, W) in {0, 1}; ``source_confidence`` keeps the change
    probability it was thresholded from.
    """

    mask: Tensor
    source_confidence: Tensor
    tau: float

    def target(self, confidence_masking: bool = False) -> Tensor:
        """The training target; with confidence masking, pixels whose top-class probability is below tau are ignored."""
        if not confidence_masking:
            return self.mask
        top_class = torch.maximum(self.source_confidence, 1.0 - self.source_confidence)
        return self.mask.masked_fill(top_class < self.tau, IGNORE_INDEX)


def make_pseudo_label(p_change: Tensor, tau: float = 0.95) -> PseudoLabelMask:
    """Pixels with change probability strictly greater than ``tau`` become changed."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    p_change = p_change.detach()
    if p_change.numel() and (p_change.min() < 0 or p_change.max() > 1):
        raise ValueError("change probabilities must lie in [0, 1]")
    return PseudoLabelMask(mask=(p_change > tau).long(), source_confidence=p_change, tau=tau)

# gtpc/losses/consistency.py
"""Supervised, image-level and feature-level consistency losses."""
import math
from typing import Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from gtpc.errors import DimensionError
from gtpc.losses.pseudo_label import IGNORE_INDEX

LOG_EPS = math.log(1e-12)


def cross_entropy(logits: Tensor, target: Tensor, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Pixel-mean two-class cross-entropy with log-probabilities clamped at log(1e-12).

    A target made only of ignored pixels contributes a zero that still carries a graph.
    """
    if tuple(logits.shape[-2:]) != tuple(target.shape[-2:]) or logits.shape[0] != target.shape[0]:
        raise DimensionError(f"logits {tuple(logits.shape)} do not match target {tuple(target.shape)}")
    target = target.long()
    if not (target != ignore_index).any():
        return logits.sum() * 0.0
    log_probs = F.log_softmax(logits, dim=1).clamp(min=LOG_EPS)
    return F.nll_loss(log_probs, target, ignore_index=ignore_index)


def supervised_loss(logits: Tensor, labels: Tensor | None) -> Tensor:
    if labels is None:
        raise ValueError("labeled batch has no ground-truth mask")
    return cross_entropy(logits, labels)


def image_consistency_loss(
    logits_s1: Tensor,
    logits_s2: Tensor,
    target_s1: Tensor,
    target_s2: Tensor | None = None,
) -> Tensor:
    """Mean cross-entropy of both strong views; ``target_s2`` defaults to ``target_s1``."""
    target_s2 = target_s1 if target_s2 is None else target_s2
    return 0.5 * (cross_entropy(logits_s1, target_s1) + cross_entropy(logits_s2, target_s2))


def feature_consistency_loss(branch_logits: Sequence[Tensor], target: Tensor) -> Tuple[Tensor, list[Tensor]]:
    """Mean cross-entropy over auxiliary branches, summed in branch order, plus the per-branch terms."""
    if not branch_logits:
        return target.new_zeros((), dtype=torch.float32), []
    branches = [cross_entropy(logits, target) for logits in branch_logits]
    total = branches[0]
    for term in branches[1:]:
        total = total + term
    return total / len(branches), branches


def total_loss(l_s: Tensor, l_ui: Tensor, l_uf: Tensor, weights: Sequence[float] = (0.5, 0.25, 0.25)) -> Tensor:
    """Weighted sum of the three training terms."""
    lambda1, lambda2, lambda3 = weights
    if min(lambda1, lambda2, lambda3) < 0:
        raise ValueError(f"loss weights must be non-negative, got {tuple(weights)}")
    return lambda1 * l_s + lambda2 * l_ui + lambda3 * l_uf

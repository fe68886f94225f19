# gtpc/perturb/operators.py
"""Feature-level perturbation operators.

Every operator maps a difference-feature tensor (B, C, h, w) to a tensor of the same
shape, drawing randomness only from the generator it is handed.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import torch
import torch.nn.functional as F
from scipy import ndimage
from torch import Tensor

from gtpc.errors import DimensionError
from gtpc.perturb.gate import GateVerdict
from gtpc.perturb.specs import PerturbationKind, PerturbationSpec


@dataclass
class PerturbationContext:
    """Inputs some operators need besides the features themselves.

    ``pseudo_label`` is the (B, H, W) binary pseudo-label of the batch; ``branch_decoder``
    decodes perturbed features through auxiliary branch ``k`` and is required by VAT.
    """

    generator: torch.Generator
    pseudo_label: Tensor | None = None
    branch_decoder: Callable[[int, Tensor], Tensor] | None = None


def _uniform(shape, like: Tensor, generator: torch.Generator, low: float = 0.0, high: float = 1.0) -> Tensor:
    draw = torch.rand(shape, generator=generator, dtype=like.dtype)
    return (low + (high - low) * draw).to(like.device)


def _randint(low: int, high: int, generator: torch.Generator) -> int:
    return int(torch.randint(low, high, (1,), generator=generator).item())


def change_mask_like(pseudo_label: Tensor | None, x: Tensor) -> Tensor:
    """Nearest-neighbour resize of a (B, H, W) pseudo-label to a (B, 1, h, w) bool mask."""
    if pseudo_label is None:
        raise ValueError("this perturbation needs a pseudo-label")
    if pseudo_label.shape[0] != x.shape[0]:
        raise DimensionError(f"pseudo-label batch {pseudo_label.shape[0]} != feature batch {x.shape[0]}")
    mask = (pseudo_label == 1).unsqueeze(1).float()
    if tuple(mask.shape[-2:]) != tuple(x.shape[-2:]):
        mask = F.interpolate(mask, size=x.shape[-2:], mode="nearest-exact")
    return (mask > 0.5).to(x.device)


def feature_noise(x: Tensor, generator: torch.Generator, amplitude: float = 0.3) -> Tensor:
    """Multiplicative uniform noise: ``x * (1 + n)`` with ``n ~ U(-amplitude, amplitude)``."""
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    return x * (1 + _uniform(x.shape, x, generator, -amplitude, amplitude))


def feature_dropout(x: Tensor, generator: torch.Generator, low: float = 0.6, high: float = 0.9) -> Tensor:
    """Zeroes the most salient positions: those whose channel-mean magnitude exceeds a per-sample quantile."""
    attention = x.detach().abs().mean(dim=1)
    levels = _uniform((x.shape[0],), attention, generator, low, high)
    ordered = attention.flatten(1).sort(dim=1).values
    # linear interpolation between order statistics, as torch.quantile does
    position = levels.to(ordered.dtype) * (ordered.shape[1] - 1)
    below = position.floor().long().clamp(max=ordered.shape[1] - 1)
    above = position.ceil().long().clamp(max=ordered.shape[1] - 1)
    low_value = ordered.gather(1, below.unsqueeze(1)).squeeze(1)
    high_value = ordered.gather(1, above.unsqueeze(1)).squeeze(1)
    thresholds = low_value + (high_value - low_value) * (position - below.to(ordered.dtype))
    drop = attention > thresholds.view(-1, 1, 1)
    return x.masked_fill(drop.unsqueeze(1), 0.0)


def object_masking(x: Tensor, pseudo_label: Tensor) -> Tensor:
    """Zeroes features where the pseudo-label says changed."""
    return x.masked_fill(change_mask_like(pseudo_label, x), 0.0)


def context_masking(x: Tensor, pseudo_label: Tensor) -> Tensor:
    """Zeroes features where the pseudo-label says unchanged."""
    return x.masked_fill(~change_mask_like(pseudo_label, x), 0.0)


def _random_rect(box, generator: torch.Generator, area_low: float, area_high: float):
    top, bottom, left, right = box
    box_h, box_w = bottom - top, right - left
    side = math.sqrt(area_low + (area_high - area_low) * torch.rand((), generator=generator).item())
    rect_h = min(box_h, max(1, round(box_h * side)))
    rect_w = min(box_w, max(1, round(box_w * side)))
    y = top + _randint(0, box_h - rect_h + 1, generator)
    x = left + _randint(0, box_w - rect_w + 1, generator)
    return y, x, rect_h, rect_w


def guided_cutout(
    x: Tensor,
    pseudo_label: Tensor,
    generator: torch.Generator,
    area_low: float = 0.1,
    area_high: float = 0.4,
) -> Tensor:
    """Zeroes a rectangle inside the bounding box of one changed component per sample.

    Samples without a changed component get a random rectangle anywhere in the map.
    """
    mask = change_mask_like(pseudo_label, x)
    height, width = x.shape[-2:]
    drop = torch.zeros_like(mask)
    for i in range(x.shape[0]):
        components, count = ndimage.label(mask[i, 0].cpu().numpy())
        if count == 0:
            box = (0, height, 0, width)
        else:
            rows, cols = ndimage.find_objects(components)[_randint(0, count, generator)]
            box = (rows.start, rows.stop, cols.start, cols.stop)
        y, x0, rect_h, rect_w = _random_rect(box, generator, area_low, area_high)
        drop[i, :, y : y + rect_h, x0 : x0 + rect_w] = True
    return x.masked_fill(drop, 0.0)


def _unit_rows(v: Tensor) -> Tensor:
    norms = v.flatten(1).norm(dim=1).view(-1, *([1] * (v.dim() - 1)))
    return v / norms.clamp(min=torch.finfo(v.dtype).tiny)


def intermediate_vat(
    x: Tensor,
    decode: Callable[[Tensor], Tensor],
    generator: torch.Generator,
    epsilon: float = 2.0,
    xi: float = 1e-6,
) -> Tensor:
    """Virtual adversarial perturbation of intermediate features.

    Finds the direction, per sample, that most increases the KL divergence of the decoded
    prediction from its unperturbed value and moves ``epsilon`` along it. The gradient is
    taken with respect to the random start only; no parameter gradients are produced.
    """
    if epsilon < 0 or xi <= 0:
        raise ValueError("intermediate_vat needs epsilon >= 0 and xi > 0")
    base = x.detach()
    start = _unit_rows(torch.randn(x.shape, generator=generator, dtype=x.dtype).to(x.device))
    with torch.enable_grad():
        with torch.no_grad():
            reference = F.softmax(decode(base), dim=1)
        r = start.clone().requires_grad_(True)
        log_adv = F.log_softmax(decode(base + xi * r), dim=1)
        divergence = F.kl_div(log_adv, reference, reduction="batchmean")
        grad = None
        if divergence.requires_grad:
            (grad,) = torch.autograd.grad(divergence, r, allow_unused=True)
    grad = torch.zeros_like(start) if grad is None else grad.detach()
    norms = grad.flatten(1).norm(dim=1)
    degenerate = ~torch.isfinite(norms) | (norms == 0)
    direction = torch.where(
        degenerate.view(-1, *([1] * (x.dim() - 1))),
        start,
        _unit_rows(torch.nan_to_num(grad)),
    )
    return x + epsilon * direction


def random_dropout(x: Tensor, generator: torch.Generator, rate: float = 0.5) -> Tensor:
    """Channel-position dropout with inverted scaling."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    keep = (_uniform(x.shape, x, generator) >= rate).to(x.dtype)
    return x * keep / (1.0 - rate)


Operator = Callable[[Tensor, PerturbationContext, int, Dict[str, float]], Tensor]

OPERATORS: Dict[PerturbationKind, Operator] = {
    PerturbationKind.FEATURE_NOISE: lambda x, ctx, k, p: feature_noise(x, ctx.generator, **p),
    PerturbationKind.FEATURE_DROPOUT: lambda x, ctx, k, p: feature_dropout(x, ctx.generator, **p),
    PerturbationKind.OBJECT_MASKING: lambda x, ctx, k, p: object_masking(x, ctx.pseudo_label),
    PerturbationKind.CONTEXT_MASKING: lambda x, ctx, k, p: context_masking(x, ctx.pseudo_label),
    PerturbationKind.GUIDED_CUTOUT: lambda x, ctx, k, p: guided_cutout(x, ctx.pseudo_label, ctx.generator, **p),
    PerturbationKind.INTERMEDIATE_VAT: lambda x, ctx, k, p: intermediate_vat(
        x, _branch(ctx, k), ctx.generator, **p
    ),
    PerturbationKind.RANDOM_DROPOUT: lambda x, ctx, k, p: random_dropout(x, ctx.generator, **p),
}


def _branch(ctx: PerturbationContext, k: int) -> Callable[[Tensor], Tensor]:
    if ctx.branch_decoder is None:
        raise ValueError("intermediate_vat needs a branch decoder in the perturbation context")
    return lambda z: ctx.branch_decoder(k, z)


def perturb(spec: PerturbationSpec, x: Tensor, context: PerturbationContext, branch: int = 1) -> Tensor:
    """Applies one spec to the whole batch."""
    return OPERATORS[spec.kind](x, context, branch, dict(spec.params))


def apply_gated_perturbations(
    x: Tensor,
    verdicts: Sequence[GateVerdict],
    specs: Sequence[PerturbationSpec],
    context: PerturbationContext,
) -> List[Tensor]:
    """One feature batch per spec; rows not selected by the gate pass through bit-identical."""
    if len(verdicts) != x.shape[0]:
        raise ValueError(f"{len(verdicts)} verdicts for a batch of {x.shape[0]}")
    selected = torch.tensor([v.perturb for v in verdicts], dtype=torch.bool, device=x.device)
    if not selected.any():
        return [x for _ in specs]
    row_mask = selected.view(-1, *([1] * (x.dim() - 1)))
    return [
        torch.where(row_mask, perturb(spec, x, context, branch=k), x)
        for k, spec in enumerate(specs, start=1)
    ]

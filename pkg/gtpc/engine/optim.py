# gtpc/engine/optim.py
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import torch
from torch import Tensor

from gtpc.config import OptimizerConfig


@dataclass
class SGDState:
    momentum_buffers: Dict[int, Tensor] = field(default_factory=dict)


def sgd_update(
    params: Sequence[Tensor],
    grads: Sequence[Tensor | None],
    state: SGDState,
    config: OptimizerConfig,
    lr: float | None = None,
) -> List[Tensor]:
    """Functional SGD with momentum: ``v <- mu v + g + wd p``, ``p <- p - lr v``.

    Returns new parameter tensors and updates the momentum buffers in ``state``. The first
    step initialises a buffer with the raw direction, as ``torch.optim.SGD`` does.
    """
    lr = config.lr if lr is None else lr
    updated = []
    with torch.no_grad():
        for index, (param, grad) in enumerate(zip(params, grads)):
            if grad is None:
                updated.append(param.detach().clone())
                continue
            direction = grad + config.weight_decay * param
            if config.momentum:
                buffer = state.momentum_buffers.get(index)
                buffer = direction.clone() if buffer is None else config.momentum * buffer + direction
                state.momentum_buffers[index] = buffer
                direction = buffer
            updated.append(param - lr * direction)
    return updated


def poly_lr(base_lr: float, step: int, total_steps: int, power: float | None) -> float:
    """Polynomial decay ``base * (1 - step / total) ** power``; constant when ``power`` is None."""
    if power is None or total_steps <= 0:
        return base_lr
    return base_lr * (1.0 - min(step, total_steps) / total_steps) ** power

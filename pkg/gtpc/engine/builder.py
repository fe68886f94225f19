# gtpc/engine/builder.py
"""Builds the network and optimizer described by an ExperimentConfig."""
import torch
from torch import nn

from gtpc.config import ExperimentConfig, OptimizerConfig
from gtpc.model.network import ChangeDetectionNet


def build_model(config: ExperimentConfig) -> ChangeDetectionNet:
    # every variant builds all auxiliary decoders so parameter shapes match across the ablation
    return ChangeDetectionNet(config.model.backbone, config.model.decoder, num_aux=config.num_aux)


def build_optimizer(model: nn.Module, config: OptimizerConfig) -> torch.optim.SGD:
    """SGD with momentum and weight decay coupled into the momentum buffer."""
    return torch.optim.SGD(
        model.parameters(),
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )

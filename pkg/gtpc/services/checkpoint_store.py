# gtpc/services/checkpoint_store.py
"""Checkpoint archives: a ``torch.save`` dict of plain tensors and JSON-able metadata."""
from pathlib import Path
from typing import Any, Dict, Tuple

import torch
from torch import nn

from gtpc.config import ExperimentConfig
from gtpc.engine.builder import build_model
from gtpc.errors import DatasetError
from gtpc.model.network import ChangeDetectionNet

CHECKPOINT_SCHEMA = 1


def save_checkpoint(
    path: str | Path,
    model: ChangeDetectionNet,
    config: ExperimentConfig,
    epoch: int,
    metrics: Dict[str, Any] | None = None,
    manifest: Dict[str, Any] | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    state_dict: Dict[str, torch.Tensor] | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": CHECKPOINT_SCHEMA,
        "state_dict": state_dict if state_dict is not None else model.state_dict(),
        "backbone": model.backbone_config.model_dump(mode="json"),
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "epoch": epoch,
        "metrics": metrics or {},
        "manifest": manifest,
    }
    if optimizer is not None:
        payload["optimizer"] = optimizer.state_dict()
    torch.save(payload, path)
    return path


def read_checkpoint(path: str | Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"checkpoint {path} does not exist")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("schema_version") != CHECKPOINT_SCHEMA:
        raise DatasetError(f"{path}: unsupported checkpoint schema {payload.get('schema_version')}")
    return payload


def load_checkpoint(path: str | Path) -> Tuple[ChangeDetectionNet, ExperimentConfig, Dict[str, Any]]:
    """Rebuilds the network recorded in a checkpoint and loads its weights."""
    payload = read_checkpoint(path)
    config = ExperimentConfig.model_validate(payload["config"])
    model = build_model(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, payload


def snapshot(model: nn.Module) -> Dict[str, torch.Tensor]:
    return {name: tensor.detach().clone() for name, tensor in model.state_dict().items()}

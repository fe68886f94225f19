# gtpc/cli/report.py
"""Run records, result tables, error maps and the gate-sweep figure."""
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import torch  # noqa: E402
from PIL import Image  # noqa: E402
from pydantic import BaseModel, Field  # noqa: E402

from gtpc.errors import DimensionError  # noqa: E402
from gtpc.services.history_store import write_json  # noqa: E402

# indexed by 2 * prediction + label
ERROR_PALETTE = np.array(
    [
        [0, 0, 0],  # TN
        [0, 255, 0],  # FN
        [255, 0, 0],  # FP
        [255, 255, 255],  # TP
    ],
    dtype=np.uint8,
)


class RunRecord(BaseModel):
    """Summary of one training run, written as ``run.json`` next to its checkpoints."""

    config_hash: str
    variant: str
    seed: int
    run_dir: str
    manifest: str = Field(description="Path of the split manifest the run used.")
    checkpoint: str | None = None
    last_checkpoint: str | None = None
    history: str | None = None
    best_epoch: int
    best_val: Dict[str, Any] | None = None
    test: Dict[str, Any] | None = None
    parameters: int = Field(description="Deployed parameter count: encoder, main and gate decoders.")
    wall_clock: float = 0.0

    def save(self) -> Path:
        return write_json(self.model_dump(), Path(self.run_dir) / "run.json")


def _as_array(mask) -> np.ndarray:
    if isinstance(mask, torch.Tensor):
        mask = mask.detach().cpu().numpy()
    return np.asarray(mask).astype(bool)


def render_error_map(prediction, label) -> np.ndarray:
    """RGB image (H, W, 3): white TP, black TN, red FP, green FN."""
    prediction, label = _as_array(prediction), _as_array(label)
    if prediction.shape != label.shape:
        raise DimensionError(f"prediction {prediction.shape} vs label {label.shape}")
    return ERROR_PALETTE[2 * prediction.astype(np.int64) + label.astype(np.int64)]


def save_error_map(prediction, label, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(render_error_map(prediction, label)).save(path)
    return path


def metrics_table(rows: Sequence[Dict[str, Any]], index: str) -> pd.DataFrame:
    """Rows with IoU and OA as percentages, indexed by ``index``."""
    frame = pd.DataFrame(list(rows))
    if frame.empty:
        return frame
    for column in ("IoU", "OA"):
        if column in frame:
            frame[column] = frame[column].astype(float) * 100.0
    return frame.set_index(index)


def write_table(frame: pd.DataFrame, stem: str | Path) -> Tuple[Path, Path]:
    """Writes an aligned text table and a CSV next to each other."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    text_path, csv_path = stem.with_suffix(".txt"), stem.with_suffix(".csv")
    text_path.write_text(frame.to_string(float_format=lambda v: f"{v:.2f}") + "\n")
    frame.to_csv(csv_path)
    return text_path, csv_path


def plot_gate_sweep(frame: pd.DataFrame, path: str | Path, default_quantile: float = 0.5) -> Path:
    """IoU against gate quantile with the default quantile highlighted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantiles = frame.index.to_numpy(dtype=float)
    iou = frame["IoU"].to_numpy(dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(quantiles, iou, marker="o", color="tab:blue")
    is_default = np.isclose(quantiles, default_quantile)
    if is_default.any():
        ax.scatter(quantiles[is_default], iou[is_default], s=90, color="tab:red", zorder=3, label="default")
        ax.legend(loc="best")
    ax.set_xlabel("gate quantile")
    ax.set_ylabel("IoU (%)")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

# gtpc/engine/state.py
from pathlib import Path
from typing import Any, Dict, List

from pydantic import BaseModel, Field

from gtpc.losses.report import LossReport
from gtpc.services.history_store import read_jsonl, write_jsonl
from gtpc.utils.transcript import append_entry


class EpochRecord(BaseModel):
    epoch: int = Field(ge=0)
    val_iou: float | None = None
    val_oa: float | None = None
    mean_loss: float
    mean_perturb_fraction: float | None = None


class TrainingHistory(BaseModel):
    """Step losses and epoch validation of one run.

    Serialised as line-delimited JSON without wall-clock values, so two runs with the same
    config and seed produce identical files.
    """

    steps: List[LossReport] = Field(default_factory=list)
    epochs: List[EpochRecord] = Field(default_factory=list)
    wall_clock: float = Field(default=0.0, description="Seconds spent training; kept out of the jsonl file.")

    def record_step(self, report: LossReport) -> None:
        if self.steps and report.step <= self.steps[-1].step:
            raise ValueError(f"step {report.step} does not follow step {self.steps[-1].step}")
        self.steps.append(report)

    def record_epoch(self, record: EpochRecord) -> None:
        if self.epochs and record.epoch <= self.epochs[-1].epoch:
            raise ValueError(f"epoch {record.epoch} does not follow epoch {self.epochs[-1].epoch}")
        self.epochs.append(record)

    def perturb_fractions(self) -> List[float]:
        return [s.perturb_fraction for s in self.steps if s.perturb_fraction is not None]

    def to_records(self) -> List[Dict[str, Any]]:
        transcript: List[Dict[str, Any]] = []
        for report in self.steps:
            append_entry(transcript, "step", **report.model_dump())
        for record in self.epochs:
            append_entry(transcript, "epoch", **record.model_dump())
        return transcript

    def save(self, path: str | Path) -> Path:
        return write_jsonl(self.to_records(), path)

    @classmethod
    def load(cls, path: str | Path) -> "TrainingHistory":
        history = cls()
        for record in read_jsonl(path):
            kind = record.pop("kind")
            if kind == "step":
                history.record_step(LossReport(**record))
            elif kind == "epoch":
                history.record_epoch(EpochRecord(**record))
            else:
                raise ValueError(f"unknown history record kind {kind!r}")
        return history

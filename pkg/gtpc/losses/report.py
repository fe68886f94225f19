# gtpc/losses/report.py
from typing import List, Sequence

from pydantic import BaseModel, Field


class LossReport(BaseModel):
    """Scalar summary of one optimisation step; ``total`` is the value the trainer computed."""

    step: int = Field(ge=0)
    epoch: int = Field(default=0, ge=0)
    l_s: float
    l_ui: float
    l_uf: float
    l_gate: float = Field(default=0.0, description="Gate decoder loss; optimised but outside the weighted total.")
    total: float
    l_uf_branches: List[float] = Field(default_factory=list)
    perturb_fraction: float | None = Field(default=None, description="Share of unlabeled samples perturbed.")
    lr: float | None = None

    def weighted_total(self, weights: Sequence[float]) -> float:
        """The weighted sum of the logged terms, for checking ``total`` against."""
        lambda1, lambda2, lambda3 = weights
        return lambda1 * self.l_s + lambda2 * self.l_ui + lambda3 * self.l_uf

    @classmethod
    def from_terms(
        cls,
        l_s: float,
        l_ui: float,
        l_uf: float,
        weights: Sequence[float],
        **fields,
    ) -> "LossReport":
        """Builds a report whose total is the weighted sum of the given terms."""
        lambda1, lambda2, lambda3 = weights
        total = lambda1 * l_s + lambda2 * l_ui + lambda3 * l_uf
        return cls(l_s=l_s, l_ui=l_ui, l_uf=l_uf, total=total, **fields)

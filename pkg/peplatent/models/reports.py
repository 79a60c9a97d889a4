"""Pydantic models for evaluation and diagnostic reports"""
from pydantic import BaseModel, Field
from typing import Dict, List, Optional


class MetricsReport(BaseModel):
    """Set-level summary of one metric, reported as mean (std)"""

    metric: str
    n: int = Field(..., alias="N")
    mean: float
    std: float
    matrix: Optional[List[List[float]]] = None
    note: Optional[str] = None

    model_config = {"populate_by_name": True}

    def formatted(self) -> str:
        """Returns the 'mean (std)' string used in result tables"""
        return f"{self.mean:.2f} ({self.std:.2f})"


class GradCheckReport(BaseModel):
    """Finite-difference agreement per parameter tensor"""

    eps: float
    max_relative_error: Dict[str, float] = Field(default_factory=dict)
    checked_entries: Dict[str, int] = Field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_relative_error.values(), default=0.0)

"""Pydantic models for zero-shot latent exploration"""
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Optional


class ExploreConfig(BaseModel):
    """Perturbation schedule for latent exploration"""

    model_config = ConfigDict(extra="forbid")

    sigma_init: float = Field(0.3, gt=0)
    sigma_step: float = Field(0.1, gt=0)
    attempts_per_sigma: int = Field(50, ge=1)
    sigma_max: float = Field(2.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_sigma_range(self) -> "ExploreConfig":
        if self.sigma_max < self.sigma_init:
            raise ValueError(f"sigma_max ({self.sigma_max}) must be >= sigma_init ({self.sigma_init})")
        return self


class FilterVerdict(BaseModel):
    """Outcome of the artifact filters on one sequence"""

    passed: bool
    reason: Optional[Literal["residue-dominance", "homopolymer-run"]] = None


class ExploreResult(BaseModel):
    """Outcome of exploring around one source embedding"""

    source_id: str = ""
    sequence: Optional[str] = None
    sigma_used: Optional[float] = None
    attempts: int = 0
    levels: int = 0

    @property
    def exhausted(self) -> bool:
        return self.sequence is None

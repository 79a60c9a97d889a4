"""Pydantic models for the diffusion noise schedule and learning-rate warmup"""
from pydantic import BaseModel, ConfigDict, Field
import numpy as np


class ScheduleConfig(BaseModel):
    """Parameters of the cosine variance schedule"""

    model_config = ConfigDict(extra="forbid")

    T: int = Field(1000, ge=1, description="Number of diffusion timesteps")
    s: float = Field(0.008, gt=0, description="Cosine offset")


class NoiseSchedule(BaseModel):
    """
    Per-timestep diffusion coefficients.

    `alpha_bar` has T+1 entries indexed by t = 0..T. `alpha`, `beta` and
    `sigma` have T entries; timestep t lives at index t-1. All arrays are
    float64 and read-only.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    T: int
    s: float
    alpha_bar: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[t])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[t - 1])

    def beta_at(self, t: int) -> float:
        return float(self.beta[t - 1])

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[t - 1])


class WarmupSpec(BaseModel):
    """Linear warmup followed by a constant learning rate"""

    model_config = ConfigDict(extra="forbid")

    base_lr: float = Field(..., gt=0)
    total_steps: int = Field(..., ge=0)
    warmup_fraction: float = Field(0.1, gt=0, lt=1)

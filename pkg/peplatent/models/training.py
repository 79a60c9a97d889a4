"""Pydantic models for training configuration, examples and loss history"""
from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Optional
import logging
import numpy as np

from peplatent.models.denoiser import PocketMask

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimization hyperparameters"""

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(8, ge=1)
    epochs: int = Field(500, ge=0)
    base_lr: float = Field(5e-5, gt=0)
    warmup_fraction: float = Field(0.1, gt=0, lt=1)
    lambda_mse: float = Field(0.9, ge=0)
    lambda_cos: float = Field(0.1, ge=0)
    mse_reduction: Literal["mean", "sum"] = "mean"
    seed: int = 0
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    peptide_length: int = Field(15, ge=1, description="Fixed binder length for a run")
    log_every: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _warn_on_lambda_sum(self) -> "TrainConfig":
        if abs(self.lambda_mse + self.lambda_cos - 1.0) > 1e-9:
            logger.warning(
                f"lambda_mse + lambda_cos = {self.lambda_mse + self.lambda_cos:.4f} (expected 1)"
            )
        return self


class TrainingExample(BaseModel):
    """One receptor/binder pair in embedding space"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    record_id: str
    receptor: np.ndarray
    pocket: PocketMask
    binder: np.ndarray


class EpochLoss(BaseModel):
    """Mean loss components for one epoch"""

    epoch: int
    mean_loss: float
    mse_component: float
    cos_component: float
    lr: float
    val_loss: Optional[float] = None

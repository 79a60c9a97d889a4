"""Run configuration: one JSON document driving every subcommand"""
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from peplatent.models.denoiser import DenoiserConfig
from peplatent.models.explore import ExploreConfig
from peplatent.models.metrics import MetricsConfig
from peplatent.models.records import SplitParameters, TrainValRatio
from peplatent.models.schedule import ScheduleConfig
from peplatent.models.training import TrainConfig


class TrainSection(TrainConfig):
    """TrainConfig plus the checkpoint to resume from"""

    resume: Optional[str] = Field(None, description="Checkpoint to continue training from")


class DataConfig(BaseModel):
    """Cleaning, splitting and codec settings"""

    model_config = ConfigDict(extra="forbid")

    cap: int = Field(10, ge=1)
    test_fraction: float = Field(0.05, gt=0, lt=1)
    train_val_ratio: TrainValRatio = (80, 20)
    max_resolution: float = Field(5.0, gt=0)
    codec_seed: int = 0
    tau: float = Field(0.5, ge=-1, le=1, description="Minimum per-row cosine for a decode")
    embedding_mode: Literal["toy", "file"] = Field(
        "toy",
        description="toy: encode sequences with the codebook codec; file: read a precomputed container",
    )

    @property
    def split_parameters(self) -> SplitParameters:
        return SplitParameters(cap=self.cap, test_fraction=self.test_fraction, train_val_ratio=self.train_val_ratio)


class PathsConfig(BaseModel):
    """Default input/output locations; command-line flags win"""

    model_config = ConfigDict(extra="forbid")

    records: Optional[str] = None
    clusters: Optional[str] = None
    manifest: Optional[str] = None
    embeddings: Optional[str] = None
    checkpoint: Optional[str] = None
    loss_csv: Optional[str] = None
    out_dir: Optional[str] = None


class RunConfig(BaseModel):
    """Top-level run configuration; unknown keys are rejected in every section"""

    model_config = ConfigDict(extra="forbid")

    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    model: DenoiserConfig = Field(default_factory=DenoiserConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    explore: ExploreConfig = Field(default_factory=ExploreConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        self.model.check()
        if self.model.T != self.schedule.T:
            raise ValueError(f"model.T ({self.model.T}) must equal schedule.T ({self.schedule.T})")
        return self


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Loads and validates a run configuration; no path means all defaults.

    Raises:
        FileNotFoundError: If the file does not exist
        pydantic.ValidationError: On unknown keys or out-of-range values
    """
    if path is None:
        return RunConfig()
    return RunConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))

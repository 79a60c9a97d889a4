"""Pydantic models for dataset records and split manifests"""
from pydantic import AfterValidator, BaseModel, ConfigDict, Field
from typing import Annotated, List, Literal, Optional, Tuple


class BinderRecord(BaseModel):
    """One receptor/binder pair from the structure database"""

    pdb_id: str = Field(..., min_length=1)
    receptor_seq: str
    binder_seq: str
    resolution: float = Field(..., gt=0, description="Resolution in Angstrom")
    pocket_indices: List[int] = Field(default_factory=list, description="0-based receptor positions")
    cluster_id: Optional[str] = None


def check_train_val_ratio(ratio: Tuple[int, int]) -> Tuple[int, int]:
    """Weights must be non-negative with a positive sum"""
    train_weight, val_weight = ratio
    if train_weight < 0 or val_weight < 0 or train_weight + val_weight == 0:
        raise ValueError(f"train_val_ratio needs non-negative weights with a positive sum, got {ratio}")
    return ratio


TrainValRatio = Annotated[Tuple[int, int], AfterValidator(check_train_val_ratio)]


RejectionReason = Literal[
    "duplicate-id",
    "low-resolution",
    "unknown-residue",
    "pocket-out-of-range",
]


class Rejection(BaseModel):
    """Why one input record was dropped during ingest"""

    pdb_id: str
    line: int
    reason: RejectionReason
    detail: str = ""


class IngestResult(BaseModel):
    """Records that survived cleaning plus the rejection log"""

    records: List[BinderRecord] = Field(default_factory=list)
    rejections: List[Rejection] = Field(default_factory=list)


class SplitParameters(BaseModel):
    """Parameters that produced a split"""

    model_config = ConfigDict(extra="forbid")

    cap: int = Field(10, ge=1)
    test_fraction: float = Field(0.05, gt=0, lt=1)
    train_val_ratio: TrainValRatio = (80, 20)


class SplitManifest(BaseModel):
    """Cluster-level train/val/test partition of record ids"""

    train: List[str] = Field(default_factory=list)
    val: List[str] = Field(default_factory=list)
    test: List[str] = Field(default_factory=list)
    train_clusters: List[str] = Field(default_factory=list)
    val_clusters: List[str] = Field(default_factory=list)
    test_clusters: List[str] = Field(default_factory=list)
    seed: int
    parameters: SplitParameters

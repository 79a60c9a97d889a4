"""Pydantic models for alignment and structure metrics"""
from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class MetricsConfig(BaseModel):
    """Alignment gap model and structure superposition settings"""

    model_config = ConfigDict(extra="forbid")

    gap_open: float = Field(10.0, ge=0, description="Penalty for the first position of a gap")
    gap_extend: float = Field(1.0, ge=0, description="Penalty for every further gap position")
    tm_rounds: int = Field(3, ge=0, description="Inlier re-superposition rounds for TM-score")


class SubstitutionMatrix(BaseModel):
    """Symmetric integer scores over the 20 standard amino acids"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    letters: str
    scores: np.ndarray
    name: str = "BLOSUM62"

    @property
    def index(self) -> Dict[str, int]:
        return {aa: i for i, aa in enumerate(self.letters)}

    def score(self, a: str, b: str) -> int:
        idx = self.index
        return int(self.scores[idx[a], idx[b]])


class KabschResult(BaseModel):
    """Optimal superposition of b onto a: b @ rotation + translation"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rmsd: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, coords: np.ndarray) -> np.ndarray:
        return coords @ self.rotation + self.translation

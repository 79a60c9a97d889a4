"""Pydantic models for the noise-prediction network"""
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import Dict, Iterable, Optional
import numpy as np

from peplatent.errors import ConfigurationError, InvalidArgumentError

STD_FLOOR = 1e-8

# Parameters that are sampled once at init and never updated
FROZEN_PARAMETERS = frozenset({"time.fourier_w"})


class DenoiserConfig(BaseModel):
    """Architecture hyperparameters of the denoiser"""

    model_config = ConfigDict(extra="forbid")

    d_emb: int = Field(32, ge=1, description="Embedding dimension (1024 for ProtT5)")
    hidden: int = Field(2048, ge=1)
    intermediate: int = Field(4096, ge=1)
    heads: int = Field(8, ge=1)
    layers: int = Field(2, ge=1)
    dropout: float = Field(0.1, ge=0, lt=1)
    T: int = Field(1000, ge=1)
    fourier_dim: Optional[int] = Field(None, ge=2, description="Defaults to hidden")
    fourier_scale: float = Field(16.0, gt=0)
    seed: int = 0

    @property
    def fourier_features(self) -> int:
        return self.fourier_dim if self.fourier_dim is not None else self.hidden

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def check(self) -> None:
        """
        Checks cross-field invariants.

        Raises:
            ConfigurationError: If hidden is not divisible by heads or the
                Fourier dimension is odd
        """
        if self.hidden % self.heads != 0:
            raise ConfigurationError(
                f"hidden ({self.hidden}) must be divisible by heads ({self.heads})"
            )
        if self.fourier_features % 2 != 0:
            raise ConfigurationError(
                f"fourier_dim ({self.fourier_features}) must be even"
            )


class NormStats(BaseModel):
    """Per-dimension z-transform statistics fitted on training binders"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, d_emb: int) -> "NormStats":
        return cls(mean=np.zeros(d_emb, dtype=np.float32), std=np.ones(d_emb, dtype=np.float32))

    def check(self) -> None:
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ConfigurationError("norm_stats mean/std must be vectors of equal length")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise ConfigurationError("norm_stats contain non-finite values")
        if np.any(self.std < STD_FLOOR):
            raise ConfigurationError(f"norm_stats std entries must be >= {STD_FLOOR}")

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.std).astype(x.dtype, copy=False)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return (x * self.std + self.mean).astype(x.dtype, copy=False)


class PocketMask(BaseModel):
    """Binary mask over receptor positions marking the binding pocket"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bits: np.ndarray

    @field_validator("bits")
    @classmethod
    def _validate_bits(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("pocket mask must be a non-empty vector")
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("pocket mask must contain only 0/1 bits")
        if not np.any(v == 1):
            raise ValueError("pocket mask needs at least one pocket position")
        return v.astype(np.int8)

    @classmethod
    def from_indices(cls, indices: Iterable[int], length: int) -> "PocketMask":
        """
        Builds a mask of the given length with 1 bits at `indices`.

        Raises:
            InvalidArgumentError: If an index is out of range
        """
        bits = np.zeros(length, dtype=np.int8)
        for i in indices:
            if not 0 <= i < length:
                raise InvalidArgumentError(f"pocket index {i} out of range for length {length}")
            bits[i] = 1
        return cls(bits=bits)

    @classmethod
    def full(cls, length: int) -> "PocketMask":
        return cls(bits=np.ones(length, dtype=np.int8))

    def __len__(self) -> int:
        return int(self.bits.size)


class DenoiserModel(BaseModel):
    """Parameters, architecture and normalization statistics of a denoiser"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: DenoiserConfig
    parameters: Dict[str, np.ndarray]
    norm_stats: NormStats
    trained_epochs: int = 0

    def trainable_names(self) -> list[str]:
        return [name for name in self.parameters if name not in FROZEN_PARAMETERS]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters.values()))

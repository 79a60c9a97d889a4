"""
Sequence <-> embedding codecs.

The production pipeline embeds sequences with a frozen protein language
model offline and ingests the matrices through embedding_store. ToyCodec is
a deterministic stand-in with the same row convention: one row per residue
plus a terminal-marker row.
"""
from typing import Optional, Protocol
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from peplatent.errors import AlphabetError, InvalidArgumentError, ShapeError

logger = logging.getLogger(__name__)

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
TERMINAL = "*"
CODEBOOK_SYMBOLS = AMINO_ACIDS + TERMINAL
_INDEX = {aa: i for i, aa in enumerate(CODEBOOK_SYMBOLS)}


def validate_sequence(seq: str) -> str:
    """
    Checks that `seq` is a non-empty string over the 20 standard amino acids.

    Raises:
        AlphabetError: Naming the first offending position
        InvalidArgumentError: If the sequence is empty
    """
    if not seq:
        raise InvalidArgumentError("sequence must not be empty")
    for pos, letter in enumerate(seq):
        if letter not in AMINO_ACIDS:
            raise AlphabetError(letter, pos, seq)
    return seq


class Codec(Protocol):
    """Anything that maps sequences to embedding matrices and back"""

    d_emb: int

    def encode(self, seq: str) -> np.ndarray: ...

    def decode(self, x: np.ndarray) -> Optional[str]: ...


class ResidueCodebook(BaseModel):
    """21 unit vectors: the 20 amino acids followed by the terminal marker"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vectors: np.ndarray
    seed: int

    @property
    def d_emb(self) -> int:
        return int(self.vectors.shape[1])


def build_codebook(d_emb: int, seed: int = 0) -> ResidueCodebook:
    """
    Draws 21 seeded Gaussian vectors and normalizes them. When d_emb >= 21
    they are orthonormalized first (QR), so pairwise cosines vanish.
    """
    if d_emb < 1:
        raise InvalidArgumentError(f"d_emb must be >= 1, got {d_emb}")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((d_emb, len(CODEBOOK_SYMBOLS)))
    if d_emb >= len(CODEBOOK_SYMBOLS):
        q, r = np.linalg.qr(raw)
        # fix column signs so the result does not depend on the LAPACK sign convention
        vectors = (q * np.sign(np.diag(r))).T
    else:
        vectors = raw.T
    vectors = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
    return ResidueCodebook(vectors=vectors.astype(np.float32), seed=seed)


def encode(seq: str, codebook: ResidueCodebook) -> np.ndarray:
    """(L'+1) x d matrix: one codebook row per residue, then the terminal row"""
    validate_sequence(seq)
    idx = [_INDEX[aa] for aa in seq] + [_INDEX[TERMINAL]]
    return codebook.vectors[idx].copy()


def decode(x: np.ndarray, codebook: ResidueCodebook, tau: float = 0.5) -> Optional[str]:
    """
    Drops the terminal row and maps every other row to the amino acid with
    the highest cosine similarity.

    Returns:
        The decoded sequence, or None when any row's best cosine is below tau
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ShapeError(f"decode needs at least 2 rows, got shape {x.shape}")
    if x.shape[1] != codebook.d_emb:
        raise ShapeError(f"embedding width {x.shape[1]} != codebook width {codebook.d_emb}")
    rows = x[:-1]
    aa_vectors = codebook.vectors[: len(AMINO_ACIDS)].astype(np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    cos = np.where(norms > 0, rows @ aa_vectors.T / np.where(norms > 0, norms, 1.0), 0.0)
    best = cos.argmax(axis=1)
    if np.any(cos[np.arange(len(best)), best] < tau):
        return None
    return "".join(AMINO_ACIDS[i] for i in best)


class ToyCodec:
    """Deterministic codebook codec"""

    def __init__(self, d_emb: int, seed: int = 0, tau: float = 0.5):
        self.codebook = build_codebook(d_emb, seed)
        self.tau = tau

    @property
    def d_emb(self) -> int:
        return self.codebook.d_emb

    def encode(self, seq: str) -> np.ndarray:
        return encode(seq, self.codebook)

    def decode(self, x: np.ndarray) -> Optional[str]:
        return decode(x, self.codebook, self.tau)

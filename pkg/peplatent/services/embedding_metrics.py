"""Mean-pooled cosine similarity and diversity of embedding matrices"""
from typing import Sequence

import numpy as np

from peplatent.errors import InvalidArgumentError, ShapeError
from peplatent.services.alignment import mean_off_diagonal_complement
from peplatent.utils.parallel import pairwise_matrix


def pooled(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] == 0:
        raise ShapeError(f"embedding must be a non-empty matrix, got shape {e.shape}")
    return e.mean(axis=0)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector has zero norm"""
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def sim_emb(e1: np.ndarray, e2: np.ndarray) -> float:
    """
    Mean-pools both matrices over rows and returns the cosine of the pooled
    vectors. Row counts may differ, widths may not.

    Raises:
        ShapeError: If the column counts differ
    """
    p1, p2 = pooled(e1), pooled(e2)
    if p1.shape != p2.shape:
        raise ShapeError(f"embedding widths differ: {p1.shape[0]} vs {p2.shape[0]}")
    return cosine(p1, p2)


def emb_similarity_matrix(E: Sequence[np.ndarray], threads: int = 1) -> np.ndarray:
    # pooled once; the cosine of pooled vectors is symmetric
    vectors = [pooled(e) for e in E]
    widths = {v.shape[0] for v in vectors}
    if len(widths) > 1:
        raise ShapeError(f"embedding widths differ across the set: {sorted(widths)}")

    return pairwise_matrix(
        len(vectors), lambda i, j: cosine(vectors[i], vectors[j]), threads, symmetric=True, diagonal=1.0
    )


def div_emb(E: Sequence[np.ndarray], threads: int = 1) -> float:
    """
    Mean of 1 - sim_emb over all ordered pairs of distinct members.

    Raises:
        InvalidArgumentError: If fewer than two embeddings are given
    """
    if len(E) < 2:
        raise InvalidArgumentError(f"div_emb needs at least 2 embeddings, got {len(E)}")
    return mean_off_diagonal_complement(emb_similarity_matrix(E, threads))


def similarity_to_reference(generated: Sequence[np.ndarray], reference: np.ndarray) -> list[float]:
    """sim_emb of every generated embedding against one ground-truth embedding"""
    if not generated:
        raise InvalidArgumentError("no generated embeddings to compare")
    return [sim_emb(e, reference) for e in generated]

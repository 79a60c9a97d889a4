"""Kabsch superposition, TM-score and structure diversity over C-alpha traces"""
from typing import Sequence
import logging

import numpy as np

from peplatent.errors import InvalidArgumentError, ShapeError
from peplatent.models.metrics import KabschResult
from peplatent.services.alignment import mean_off_diagonal_complement
from peplatent.utils.parallel import pairwise_matrix

logger = logging.getLogger(__name__)

MIN_ATOMS = 3
# below this length the inlier refinement is skipped
MIN_REFINE_LENGTH = 8
D0_FLOOR = 0.5


def check_coords(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    for name, x in (("a", a), ("b", b)):
        if x.ndim != 2 or x.shape[1] != 3:
            raise ShapeError(f"coordinate set {name} must be L x 3, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError(f"coordinate set {name} holds non-finite values")
    if a.shape != b.shape:
        raise ShapeError(f"coordinate sets differ in length: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < MIN_ATOMS:
        raise InvalidArgumentError(f"superposition needs at least {MIN_ATOMS} points, got {a.shape[0]}")
    return a, b


def _superpose(a: np.ndarray, b: np.ndarray) -> KabschResult:
    ca = a.mean(axis=0)
    cb = b.mean(axis=0)
    X = a - ca
    Y = b - cb
    U, _, Wt = np.linalg.svd(Y.T @ X)
    if np.linalg.det(U) * np.linalg.det(Wt) < 0.0:
        U[:, -1] = -U[:, -1]
    R = U @ Wt
    rmsd = float(np.sqrt(np.mean(np.sum((Y @ R - X) ** 2, axis=1))))
    return KabschResult(rmsd=rmsd, rotation=R, translation=ca - cb @ R)


def kabsch_rmsd(a: np.ndarray, b: np.ndarray) -> KabschResult:
    """
    Least-squares rigid superposition of b onto a.

    Centroids are removed, the rotation comes from the SVD of the
    covariance matrix and a reflection is flipped back to a proper
    rotation. Collinear inputs are accepted.

    Returns:
        KabschResult whose apply(b) lies on a with minimal RMSD

    Raises:
        ShapeError: On a length mismatch or non L x 3 input
    """
    a, b = check_coords(a, b)
    return _superpose(a, b)


def plain_rmsd(a: np.ndarray, b: np.ndarray) -> float:
    """RMSD without any superposition"""
    a, b = check_coords(a, b)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def tm_d0(length: int) -> float:
    """1.24 * (L - 15)^(1/3) - 1.8, floored at 0.5 Angstrom"""
    return max(1.24 * float(np.cbrt(length - 15)) - 1.8, D0_FLOOR)


def tm_from_distances(d: np.ndarray, d0: float) -> float:
    """(1/L) * sum of 1 / (1 + (d_i / d0)^2)"""
    d = np.asarray(d, dtype=np.float64)
    return float(np.mean(1.0 / (1.0 + (d / d0) ** 2)))


def _distances(a: np.ndarray, b: np.ndarray, fit: KabschResult) -> np.ndarray:
    return np.linalg.norm(a - fit.apply(b), axis=1)


def tm_score(a: np.ndarray, b: np.ndarray, rounds: int = 3) -> float:
    """
    TM-score under identity residue correspondence.

    Starts from the plain Kabsch superposition, then re-superposes on the
    residues closer than 2 * d0 for `rounds` rounds and keeps the best
    score seen. Traces shorter than 8 residues use plain Kabsch only.

    Returns:
        Score in (0, 1]

    Raises:
        ShapeError: On a length mismatch
    """
    a, b = check_coords(a, b)
    d0 = tm_d0(len(a))
    fit = _superpose(a, b)
    best = tm_from_distances(_distances(a, b, fit), d0)
    if len(a) < MIN_REFINE_LENGTH:
        return best

    for _ in range(rounds):
        inliers = _distances(a, b, fit) < 2.0 * d0
        if inliers.sum() < MIN_ATOMS:
            break
        fit = _superpose(a[inliers], b[inliers])
        best = max(best, tm_from_distances(_distances(a, b, fit), d0))
    return best


def _check_set(U: Sequence[np.ndarray], what: str) -> None:
    if len(U) < 2:
        raise InvalidArgumentError(f"{what} needs at least 2 structures, got {len(U)}")


def tm_matrix(U: Sequence[np.ndarray], rounds: int = 3, threads: int = 1) -> np.ndarray:
    """T[i, j] = tm_score(U[i], U[j]) over ordered pairs; unit diagonal"""
    return pairwise_matrix(len(U), lambda i, j: tm_score(U[i], U[j], rounds), threads, diagonal=1.0)


def rmsd_matrix(U: Sequence[np.ndarray], threads: int = 1) -> np.ndarray:
    """Symmetric pairwise Kabsch RMSD matrix with zero diagonal"""
    return pairwise_matrix(
        len(U), lambda i, j: kabsch_rmsd(U[i], U[j]).rmsd, threads, symmetric=True, diagonal=0.0
    )


def div_str(U: Sequence[np.ndarray], rounds: int = 3, threads: int = 1) -> float:
    """
    Mean of 1 - TM over all ordered pairs of distinct structures.

    Raises:
        InvalidArgumentError: If fewer than two structures are given
    """
    _check_set(U, "div_str")
    return mean_off_diagonal_complement(tm_matrix(U, rounds, threads))


def select_representative(U: Sequence[np.ndarray], threads: int = 1) -> int:
    """Index of the structure with the smallest summed RMSD to the others; ties go to the lowest index"""
    _check_set(U, "select_representative")
    totals = rmsd_matrix(U, threads).sum(axis=1)
    index = int(np.argmin(totals))
    logger.debug(f"Representative {index} of {len(U)} (summed RMSD {totals[index]:.3f})")
    return index

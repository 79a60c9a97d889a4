"""Needleman-Wunsch global alignment and sequence diversity"""
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np

from peplatent.errors import DegenerateNormalizationError, InvalidArgumentError, ParseError
from peplatent.models.metrics import MetricsConfig, SubstitutionMatrix
from peplatent.services.codec import AMINO_ACIDS, validate_sequence
from peplatent.utils.parallel import pairwise_matrix

logger = logging.getLogger(__name__)

NEG_INF = float("-inf")
DEFAULT_GAPS = MetricsConfig()


def parse_substitution_matrix(text: str, name: str = "custom") -> SubstitutionMatrix:
    """
    Parses a matrix in the NCBI layout: '#' comments, a header row of
    column letters, then one row per letter starting with that letter.

    Only the 20 standard amino acids are kept; ambiguity codes and '*'
    are read and discarded.

    Raises:
        ParseError: On ragged rows, non-integer scores, a missing standard
            letter or an asymmetric table
    """
    header: Optional[List[str]] = None
    rows: Dict[str, List[int]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if header is None:
            header = tokens
            continue
        letter, values = tokens[0], tokens[1:]
        if len(values) != len(header):
            raise ParseError(f"row '{letter}' has {len(values)} scores, header has {len(header)}", line_no)
        try:
            rows[letter] = [int(v) for v in values]
        except ValueError as e:
            raise ParseError(f"row '{letter}' holds a non-integer score", line_no) from e

    if header is None:
        raise ParseError("substitution matrix has no header row")
    missing = [aa for aa in AMINO_ACIDS if aa not in rows or aa not in header]
    if missing:
        raise ParseError(f"substitution matrix lacks letters {''.join(missing)}")

    cols = [header.index(aa) for aa in AMINO_ACIDS]
    scores = np.array([[rows[aa][c] for c in cols] for aa in AMINO_ACIDS], dtype=np.int64)
    if not np.array_equal(scores, scores.T):
        raise ParseError("substitution matrix is not symmetric")
    return SubstitutionMatrix(letters=AMINO_ACIDS, scores=scores, name=name)


def load_substitution_matrix(path: Union[str, Path]) -> SubstitutionMatrix:
    path = Path(path)
    return parse_substitution_matrix(path.read_text(encoding="utf-8"), name=path.stem)


@lru_cache(maxsize=1)
def blosum62() -> SubstitutionMatrix:
    """The bundled BLOSUM62 table"""
    text = resources.files("peplatent.data").joinpath("blosum62.txt").read_text(encoding="utf-8")
    return parse_substitution_matrix(text, name="BLOSUM62")


def nw_align(
    s1: str,
    s2: str,
    matrix: Optional[SubstitutionMatrix] = None,
    gap_open: float = DEFAULT_GAPS.gap_open,
    gap_extend: float = DEFAULT_GAPS.gap_extend,
) -> float:
    """
    Optimal global alignment score with affine gaps (Gotoh).

    A gap of length k costs gap_open + (k - 1) * gap_extend. Three matrices
    track alignments ending in a match column (M), a gap in s2 (X) and a gap
    in s1 (Y); a gap in one sequence may directly follow a gap in the other.

    Raises:
        AlphabetError: If either sequence holds a non-standard letter
    """
    validate_sequence(s1)
    validate_sequence(s2)
    matrix = matrix or blosum62()
    idx = matrix.index
    a = [idx[c] for c in s1]
    b = [idx[c] for c in s2]
    sub = matrix.scores.tolist()
    n, m = len(a), len(b)

    # row 0
    M_prev = [0.0] + [NEG_INF] * m
    X_prev = [NEG_INF] * (m + 1)
    Y_prev = [NEG_INF] + [-gap_open - (j - 1) * gap_extend for j in range(1, m + 1)]

    for i in range(1, n + 1):
        row = sub[a[i - 1]]
        M = [NEG_INF] * (m + 1)
        X = [NEG_INF] * (m + 1)
        Y = [NEG_INF] * (m + 1)
        X[0] = -gap_open - (i - 1) * gap_extend
        for j in range(1, m + 1):
            M[j] = max(M_prev[j - 1], X_prev[j - 1], Y_prev[j - 1]) + row[b[j - 1]]
            X[j] = max(M_prev[j] - gap_open, X_prev[j] - gap_extend, Y_prev[j] - gap_open)
            Y[j] = max(M[j - 1] - gap_open, Y[j - 1] - gap_extend, X[j - 1] - gap_open)
        M_prev, X_prev, Y_prev = M, X, Y

    return float(max(M_prev[m], X_prev[m], Y_prev[m]))


def sim_seq(
    s1: str,
    s2: str,
    matrix: Optional[SubstitutionMatrix] = None,
    gaps: MetricsConfig = DEFAULT_GAPS,
    self_score: Optional[float] = None,
) -> float:
    """
    NW(s1, s2) / NW(s1, s1). Normalized by the first argument only, so the
    measure is asymmetric; it may be negative and is not clamped.

    Raises:
        DegenerateNormalizationError: If NW(s1, s1) is zero
    """
    matrix = matrix or blosum62()
    if self_score is None:
        self_score = nw_align(s1, s1, matrix, gaps.gap_open, gaps.gap_extend)
    if self_score == 0:
        raise DegenerateNormalizationError(f"self-alignment score of {s1!r} is zero")
    return nw_align(s1, s2, matrix, gaps.gap_open, gaps.gap_extend) / self_score


def similarity_matrix(
    seqs: Sequence[str],
    matrix: Optional[SubstitutionMatrix] = None,
    gaps: MetricsConfig = DEFAULT_GAPS,
    threads: int = 1,
) -> np.ndarray:
    """S[i, j] = sim_seq(seqs[i], seqs[j]); unit diagonal, not symmetric in general"""
    matrix = matrix or blosum62()
    self_scores = [nw_align(s, s, matrix, gaps.gap_open, gaps.gap_extend) for s in seqs]

    def cell(i: int, j: int) -> float:
        return sim_seq(seqs[i], seqs[j], matrix, gaps, self_score=self_scores[i])

    # the diagonal still needs the zero-normalizer check
    for s, score in zip(seqs, self_scores):
        if score == 0:
            raise DegenerateNormalizationError(f"self-alignment score of {s!r} is zero")
    return pairwise_matrix(len(seqs), cell, threads, diagonal=1.0)


def mean_off_diagonal_complement(sim: np.ndarray) -> float:
    """(1 / (N (N - 1))) * sum over i != j of (1 - sim[i, j])"""
    n = sim.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"diversity needs at least 2 members, got {n}")
    off = ~np.eye(n, dtype=bool)
    return float(np.mean(1.0 - sim[off]))


def div_seq(
    seqs: Sequence[str],
    matrix: Optional[SubstitutionMatrix] = None,
    gaps: MetricsConfig = DEFAULT_GAPS,
    threads: int = 1,
) -> float:
    """
    Mean of 1 - sim_seq over all ordered pairs of distinct members.

    Raises:
        InvalidArgumentError: If fewer than two sequences are given
    """
    if len(seqs) < 2:
        raise InvalidArgumentError(f"div_seq needs at least 2 sequences, got {len(seqs)}")
    return mean_off_diagonal_complement(similarity_matrix(seqs, matrix, gaps, threads))

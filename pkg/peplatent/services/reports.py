"""Set-level metric reports and their JSON / CSV forms"""
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Union
import json
import logging

import numpy as np

from peplatent.errors import InvalidArgumentError
from peplatent.models.metrics import MetricsConfig, SubstitutionMatrix
from peplatent.models.reports import MetricsReport
from peplatent.services import alignment, embedding_metrics, structure
from peplatent.utils.workspace import atomic_write_text

logger = logging.getLogger(__name__)

NEGATIVE_SIM_NOTE = "sim_seq is negative for some pairs and is not clamped, so div_seq may exceed 1"


def _off_diagonal(m: np.ndarray) -> np.ndarray:
    return m[~np.eye(m.shape[0], dtype=bool)]


def diversity_report(
    metric: str,
    sim: np.ndarray,
    include_matrix: bool = False,
    note: Optional[str] = None,
) -> MetricsReport:
    """
    Summarizes an N x N similarity matrix as a diversity value.

    mean is the average of 1 - sim over ordered pairs, std the population
    std of the same values. The optional matrix is the symmetric
    dissimilarity 1 - (S + S^T) / 2 with a zero diagonal.
    """
    complements = 1.0 - _off_diagonal(sim)
    mean = alignment.mean_off_diagonal_complement(sim)
    matrix = None
    if include_matrix:
        dissim = 1.0 - (sim + sim.T) / 2.0
        np.fill_diagonal(dissim, 0.0)
        matrix = dissim.tolist()
    return MetricsReport(
        metric=metric,
        n=sim.shape[0],
        mean=mean,
        std=float(np.std(complements)),
        matrix=matrix,
        note=note,
    )


def seq_diversity_report(
    seqs: Sequence[str],
    matrix: Optional[SubstitutionMatrix] = None,
    gaps: MetricsConfig = alignment.DEFAULT_GAPS,
    threads: int = 1,
    include_matrix: bool = False,
) -> MetricsReport:
    if len(seqs) < 2:
        raise InvalidArgumentError(f"div_seq needs at least 2 sequences, got {len(seqs)}")
    sim = alignment.similarity_matrix(seqs, matrix, gaps, threads)
    note = NEGATIVE_SIM_NOTE if np.any(_off_diagonal(sim) < 0) else None
    return diversity_report("div_seq", sim, include_matrix, note)


def emb_diversity_report(
    E: Sequence[np.ndarray],
    threads: int = 1,
    include_matrix: bool = False,
) -> MetricsReport:
    if len(E) < 2:
        raise InvalidArgumentError(f"div_emb needs at least 2 embeddings, got {len(E)}")
    return diversity_report("div_emb", embedding_metrics.emb_similarity_matrix(E, threads), include_matrix)


def str_diversity_report(
    U: Sequence[np.ndarray],
    rounds: int = 3,
    threads: int = 1,
    include_matrix: bool = False,
) -> MetricsReport:
    if len(U) < 2:
        raise InvalidArgumentError(f"div_str needs at least 2 structures, got {len(U)}")
    return diversity_report("div_str", structure.tm_matrix(U, rounds, threads), include_matrix)


def rmsd_report(U: Sequence[np.ndarray], threads: int = 1) -> MetricsReport:
    """Mean / std of Kabsch RMSD over unique pairs, with the full RMSD matrix"""
    if len(U) < 2:
        raise InvalidArgumentError(f"rmsd report needs at least 2 structures, got {len(U)}")
    rmsd = structure.rmsd_matrix(U, threads)
    upper = rmsd[np.triu_indices(len(U), k=1)]
    return MetricsReport(
        metric="rmsd",
        n=len(U),
        mean=float(upper.mean()),
        std=float(upper.std()),
        matrix=rmsd.tolist(),
    )


def emb_similarity_to_reference(generated: Sequence[np.ndarray], reference: np.ndarray) -> MetricsReport:
    """Mean / std of sim_emb between each generated embedding and the ground-truth binder"""
    values = np.array(embedding_metrics.similarity_to_reference(generated, reference))
    return MetricsReport(metric="sim_emb_ref", n=len(values), mean=float(values.mean()), std=float(values.std()))


def summarize_groups(values_by_group: Mapping[str, float], metric: str) -> MetricsReport:
    """
    Mean (std) of one per-group value across groups, e.g. div_seq of the
    binders generated for each receptor, summarized over the test set.
    """
    if not values_by_group:
        raise InvalidArgumentError("no groups to summarize")
    values = np.array(list(values_by_group.values()), dtype=np.float64)
    return MetricsReport(metric=metric, n=len(values), mean=float(values.mean()), std=float(values.std()))


def reports_json(reports: Iterable[MetricsReport]) -> str:
    """JSON list of {metric, N, mean, std, matrix?, note?}"""
    payload = [r.model_dump(by_alias=True, exclude_none=True) for r in reports]
    return json.dumps(payload, indent=2) + "\n"


def matrix_csv(matrix: Sequence[Sequence[float]], labels: Optional[List[str]] = None) -> str:
    """Pairwise matrix as CSV with a header row and a leading label column"""
    n = len(matrix)
    labels = labels or [str(i) for i in range(n)]
    if len(labels) != n:
        raise InvalidArgumentError(f"{len(labels)} labels for a {n} x {n} matrix")
    lines = ["id," + ",".join(labels)]
    for label, row in zip(labels, matrix):
        lines.append(label + "," + ",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def write_reports(reports: List[MetricsReport], path: Union[str, Path]) -> Path:
    path = atomic_write_text(path, reports_json(reports))
    logger.info(f"Wrote {len(reports)} metric reports to {path}")
    return path

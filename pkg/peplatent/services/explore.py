"""Zero-shot latent exploration with sigma escalation and artifact filters"""
from collections import Counter
from itertools import groupby
from typing import Mapping, Optional
import logging

import numpy as np

from peplatent.errors import InvalidArgumentError
from peplatent.models.explore import ExploreConfig, ExploreResult, FilterVerdict
from peplatent.services.codec import Codec, validate_sequence
from peplatent.utils.parallel import ordered_map
from peplatent.utils.seeding import make_rng

logger = logging.getLogger(__name__)

MAX_RESIDUE_FRACTION = 0.5
MAX_RUN_FRACTION = 0.3
_SIGMA_TOLERANCE = 1e-9


def perturb(x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """x + sigma * eps with eps i.i.d. standard normal"""
    if sigma < 0:
        raise InvalidArgumentError(f"sigma must be >= 0, got {sigma}")
    noise = rng.standard_normal(x.shape)
    return (x + sigma * noise).astype(x.dtype, copy=False)


def longest_run(seq: str) -> int:
    return max((sum(1 for _ in group) for _, group in groupby(seq)), default=0)


def passes_filters(seq: str) -> FilterVerdict:
    """
    Rejects sequences dominated by one residue type (> 50% of positions)
    or holding a homopolymer run longer than 30% of the length. Both
    thresholds are strict, so exactly 50% / 30% passes.
    """
    validate_sequence(seq)
    length = len(seq)
    if max(Counter(seq).values()) / length > MAX_RESIDUE_FRACTION:
        return FilterVerdict(passed=False, reason="residue-dominance")
    if longest_run(seq) / length > MAX_RUN_FRACTION:
        return FilterVerdict(passed=False, reason="homopolymer-run")
    return FilterVerdict(passed=True)


def sigma_levels(cfg: ExploreConfig) -> list[float]:
    """sigma_init, sigma_init + step, ... up to sigma_max (inclusive)"""
    levels = []
    k = 0
    while True:
        sigma = cfg.sigma_init + k * cfg.sigma_step
        if sigma > cfg.sigma_max + _SIGMA_TOLERANCE:
            return levels
        levels.append(sigma)
        k += 1


def explore_one(
    x: np.ndarray,
    codec: Codec,
    cfg: ExploreConfig,
    rng: Optional[np.random.Generator] = None,
    source_id: str = "",
) -> ExploreResult:
    """
    Perturbs `x` and decodes until a sequence passes the filters.

    Each sigma level gets up to attempts_per_sigma perturb -> decode cycles.
    A decode failure and a filtered sequence both count as failed attempts.
    The schedule restarts at sigma_init for every source embedding.

    Returns:
        ExploreResult with the sequence, the sigma that produced it and the
        total attempt count; sequence is None when every level is exhausted
    """
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("cannot explore around a non-finite embedding")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    attempts = 0
    levels = sigma_levels(cfg)
    for level, sigma in enumerate(levels, start=1):
        for _ in range(cfg.attempts_per_sigma):
            attempts += 1
            candidate = codec.decode(perturb(x, sigma, rng))
            if candidate is None:
                continue
            if passes_filters(candidate).passed:
                logger.debug(f"{source_id or 'embedding'}: accepted at sigma={sigma:.2f} after {attempts} attempts")
                return ExploreResult(
                    source_id=source_id,
                    sequence=candidate,
                    sigma_used=sigma,
                    attempts=attempts,
                    levels=level,
                )
    logger.info(f"{source_id or 'embedding'}: exhausted {len(levels)} sigma levels ({attempts} attempts)")
    return ExploreResult(source_id=source_id, attempts=attempts, levels=len(levels))


def explore_many(
    embeddings: Mapping[str, np.ndarray],
    codec: Codec,
    cfg: ExploreConfig,
    threads: int = 1,
) -> list[ExploreResult]:
    """
    Explores every embedding with its own generator derived from cfg.seed
    and its index, so results do not depend on the thread count.
    """
    items = list(embeddings.items())

    def run(index: int) -> ExploreResult:
        source_id, x = items[index]
        rng = make_rng(cfg.seed, index, "explore")
        return explore_one(x, codec, cfg, rng, source_id)

    return ordered_map(run, range(len(items)), threads)


def explore_tsv(results: list[ExploreResult]) -> str:
    """TSV with columns source_id, sequence, sigma_used, attempts; exhausted rows carry '-'"""
    lines = ["source_id\tsequence\tsigma_used\tattempts"]
    for r in results:
        if r.exhausted:
            lines.append(f"{r.source_id}\t-\t-\t{r.attempts}")
        else:
            lines.append(f"{r.source_id}\t{r.sequence}\t{r.sigma_used:.2f}\t{r.attempts}")
    return "\n".join(lines) + "\n"

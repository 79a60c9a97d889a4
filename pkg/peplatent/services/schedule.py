"""Cosine variance schedule, derived diffusion coefficients and LR warmup"""
from pathlib import Path
import io
import logging
import math

import numpy as np

from peplatent.errors import InvalidArgumentError
from peplatent.models.schedule import NoiseSchedule, WarmupSpec
from peplatent.utils.workspace import atomic_write_text

logger = logging.getLogger(__name__)

BETA_MAX = 0.999


def _cosine_alpha_bar(t: np.ndarray, T: int, s: float) -> np.ndarray:
    f = np.cos((t / T + s) / (1.0 + s) * (math.pi / 2.0)) ** 2
    f0 = math.cos(s / (1.0 + s) * (math.pi / 2.0)) ** 2
    return f / f0


def build_schedule(T: int, s: float = 0.008) -> NoiseSchedule:
    """
    Builds the cosine variance schedule.

    beta_t is derived from consecutive ratios of the cosine curve, clipped
    to BETA_MAX, and alpha_bar is recomputed as the running product of the
    clipped alphas. Accumulation is done in float64.

    Args:
        T: Number of timesteps
        s: Offset of the cosine curve

    Returns:
        NoiseSchedule with read-only float64 arrays

    Raises:
        InvalidArgumentError: If T < 1 or s <= 0
    """
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    if not s > 0:
        raise InvalidArgumentError(f"s must be > 0, got {s}")

    steps = np.arange(T + 1, dtype=np.float64)
    raw = _cosine_alpha_bar(steps, T, s)
    raw[0] = 1.0

    beta = 1.0 - raw[1:] / raw[:-1]
    beta = np.clip(beta, 0.0, BETA_MAX)
    alpha = 1.0 - beta

    alpha_bar = np.empty(T + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(alpha)

    # posterior variance; zero at t=1 because alpha_bar[0] == 1
    sigma_sq = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta
    sigma = np.sqrt(sigma_sq)

    for arr in (alpha_bar, alpha, beta, sigma):
        arr.setflags(write=False)

    logger.debug(f"Built cosine schedule T={T} s={s} alpha_bar[T]={alpha_bar[-1]:.3e}")
    return NoiseSchedule(T=T, s=s, alpha_bar=alpha_bar, alpha=alpha, beta=beta, sigma=sigma)


def check_timestep(sched: NoiseSchedule, t: int) -> None:
    """Raises InvalidArgumentError unless 1 <= t <= T"""
    if not 1 <= t <= sched.T:
        raise InvalidArgumentError(f"timestep {t} out of range [1, {sched.T}]")


def marginal_coeffs(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    """
    Returns (sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t)).

    Raises:
        InvalidArgumentError: If t is outside [1, T]
    """
    check_timestep(sched, t)
    ab = sched.alpha_bar_at(t)
    return math.sqrt(ab), math.sqrt(1.0 - ab)


def warmup_lr(spec: WarmupSpec, step: int) -> float:
    """
    Learning rate at `step`: linear ramp from 0 to base_lr over the first
    warmup_fraction of total_steps, constant afterwards.

    Raises:
        InvalidArgumentError: If step is outside [0, total_steps]
    """
    if not 0 <= step <= spec.total_steps:
        raise InvalidArgumentError(f"step {step} out of range [0, {spec.total_steps}]")
    warmup_steps = spec.warmup_fraction * spec.total_steps
    if warmup_steps <= 0 or step >= warmup_steps:
        return spec.base_lr
    return spec.base_lr * step / warmup_steps


def schedule_table(sched: NoiseSchedule) -> str:
    """Renders the coefficient table as CSV (t, beta, alpha, alpha_bar, sigma)"""
    buf = io.StringIO()
    buf.write("t,beta,alpha,alpha_bar,sigma\n")
    for t in range(1, sched.T + 1):
        buf.write(
            f"{t},{sched.beta_at(t):.9g},{sched.alpha_at(t):.9g},"
            f"{sched.alpha_bar_at(t):.9g},{sched.sigma_at(t):.9g}\n"
        )
    return buf.getvalue()


def dump_schedule(sched: NoiseSchedule, path: Path) -> Path:
    """Writes the coefficient table to `path` atomically"""
    atomic_write_text(path, schedule_table(sched))
    logger.info(f"Schedule table ({sched.T} rows) written to {path}")
    return path

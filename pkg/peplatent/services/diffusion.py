"""Forward noising, the reverse step and conditional generation"""
from typing import Callable, Optional
import logging
import math

import numpy as np

from peplatent.errors import InvalidArgumentError, SamplingDivergenceError, ShapeError
from peplatent.models.denoiser import DenoiserModel, PocketMask
from peplatent.models.schedule import NoiseSchedule
from peplatent.services.denoiser import predict_noise
from peplatent.services.schedule import check_timestep, marginal_coeffs

logger = logging.getLogger(__name__)

# (x_t, t) -> predicted noise
NoisePredictor = Callable[[np.ndarray, int], np.ndarray]


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps"""
    _same_shape(x0, eps, "q_sample")
    a, b = marginal_coeffs(sched, t)
    return (a * x0 + b * eps).astype(x0.dtype, copy=False)


def q_step(x_prev: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One step of the forward chain: sqrt(alpha_t) * x_{t-1} + sqrt(1 - alpha_t) * eps"""
    _same_shape(x_prev, eps, "q_step")
    check_timestep(sched, t)
    alpha = sched.alpha_at(t)
    return (math.sqrt(alpha) * x_prev + math.sqrt(1.0 - alpha) * eps).astype(x_prev.dtype, copy=False)


def forward_chain(x0: np.ndarray, t: int, sched: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Applies q_step for steps 1..t with fresh standard-normal noise each step"""
    x = x0
    for step in range(1, t + 1):
        x = q_step(x, step, rng.standard_normal(x.shape).astype(x0.dtype), sched)
    return x


def posterior_mean(x_t: np.ndarray, eps_pred: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """
    Mean of p(x_{t-1} | x_t) from a noise prediction:
    (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_pred) / sqrt(alpha_t)
    """
    _same_shape(x_t, eps_pred, "posterior_mean")
    check_timestep(sched, t)
    alpha = sched.alpha_at(t)
    coeff = (1.0 - alpha) / math.sqrt(1.0 - sched.alpha_bar_at(t))
    return ((x_t - coeff * eps_pred) / math.sqrt(alpha)).astype(x_t.dtype, copy=False)


def reverse_step(
    x_t: np.ndarray,
    eps_pred: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    noise: np.ndarray,
) -> np.ndarray:
    """posterior_mean + sigma_t * noise; deterministic at t = 1 where sigma_1 = 0"""
    _same_shape(x_t, noise, "reverse_step")
    mean = posterior_mean(x_t, eps_pred, t, sched)
    sigma = sched.sigma_at(t)
    if sigma == 0.0:
        return mean
    return (mean + sigma * noise).astype(x_t.dtype, copy=False)


def generate(
    model: DenoiserModel,
    z: np.ndarray,
    m: Optional[PocketMask],
    length: int,
    sched: NoiseSchedule,
    seed: int,
    predictor: Optional[NoisePredictor] = None,
) -> np.ndarray:
    """
    Generates one peptide embedding by reverse diffusion.

    x_T is drawn in normalized space, the loop runs t = T..1 and the result
    is mapped back through the inverse z-transform. Noise is drawn from one
    generator in a fixed order: x_T first, then the step noise for t = T..2.

    Args:
        model: Trained denoiser (supplies config and norm_stats)
        z: Receptor embedding, already z-transformed
        m: Pocket mask over receptor rows
        length: Number of peptide rows L'
        sched: Noise schedule
        seed: Seed of this call's generator
        predictor: Optional replacement for the denoiser, called as
            predictor(x_t, t); used to plug in oracle denoisers

    Returns:
        x_0 with shape (length, d_emb), de-normalized

    Raises:
        SamplingDivergenceError: If the result holds NaN or Inf
    """
    if length < 1:
        raise InvalidArgumentError(f"peptide length must be >= 1, got {length}")
    d_emb = model.config.d_emb
    rng = np.random.default_rng(seed)

    if predictor is None:
        def predictor(x_t: np.ndarray, t: int) -> np.ndarray:
            return predict_noise(model, x_t, z, m, t, train_mode=False)

    x = rng.standard_normal((length, d_emb)).astype(np.float32)
    for t in range(sched.T, 0, -1):
        eps_pred = np.asarray(predictor(x, t), dtype=np.float32)
        if t > 1:
            noise = rng.standard_normal(x.shape).astype(np.float32)
        else:
            noise = np.zeros_like(x)
        x = reverse_step(x, eps_pred, t, sched, noise)

    if not np.all(np.isfinite(x)):
        logger.error(f"Sampling diverged (seed={seed})")
        raise SamplingDivergenceError(f"generated embedding holds non-finite values (seed={seed})")
    return model.norm_stats.denormalize(x)

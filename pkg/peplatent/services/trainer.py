"""Training objective, feature normalization, Adam and the training loop"""
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import io
import logging
import math

import numpy as np

from peplatent.errors import InvalidArgumentError, ShapeError, TrainingDivergenceError
from peplatent.models.denoiser import FROZEN_PARAMETERS, STD_FLOOR, DenoiserModel, NormStats
from peplatent.models.schedule import NoiseSchedule, WarmupSpec
from peplatent.models.training import EpochLoss, TrainConfig, TrainingExample
from peplatent.services.autodiff import Graph, Tensor
from peplatent.services.denoiser import build_prediction, check_inputs
from peplatent.services.diffusion import q_sample
from peplatent.services.schedule import warmup_lr
from peplatent.utils.workspace import atomic_write_text

logger = logging.getLogger(__name__)


def _check_pair(eps_pred: np.ndarray, eps: np.ndarray) -> None:
    if eps_pred.shape != eps.shape:
        raise ShapeError(f"prediction shape {eps_pred.shape} != target shape {eps.shape}")


def mse_loss(eps_pred: np.ndarray, eps: np.ndarray, reduction: str = "mean") -> float:
    """Squared error between prediction and target, averaged (or summed) over entries"""
    _check_pair(eps_pred, eps)
    sq = (np.asarray(eps_pred, dtype=np.float64) - np.asarray(eps, dtype=np.float64)) ** 2
    return float(sq.sum() if reduction == "sum" else sq.mean())


def row_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    valid = (na > 0) & (nb > 0)
    return np.where(valid, (a * b).sum(axis=1) / np.where(valid, na * nb, 1.0), 0.0)


def cosine_loss(eps_pred: np.ndarray, eps: np.ndarray) -> float:
    """
    1 - mean row-wise cosine similarity. Rows with zero norm count as
    cosine 0. The result lies in [0, 2].
    """
    _check_pair(eps_pred, eps)
    if eps.ndim != 2:
        raise ShapeError(f"cosine loss expects (L', d) matrices, got {eps.shape}")
    return float(1.0 - row_cosines(eps_pred, eps).mean())


def total_loss(eps_pred: np.ndarray, eps: np.ndarray, cfg: TrainConfig) -> float:
    """lambda_mse * L_mse + lambda_cos * L_cos"""
    return cfg.lambda_mse * mse_loss(eps_pred, eps, cfg.mse_reduction) + cfg.lambda_cos * cosine_loss(eps_pred, eps)


def loss_on_graph(g: Graph, pred: Tensor, target: Tensor, cfg: TrainConfig) -> Tuple[Tensor, Tensor, Tensor]:
    """Records the training objective on `g`; returns (total, mse, cos) scalar tensors"""
    diff = g.add(pred, g.scale(target, -1.0))
    mse = g.mean(g.mul(diff, diff))
    if cfg.mse_reduction == "sum":
        mse = g.scale(mse, float(diff.data.size))
    cos = g.add(g.constant(1.0), g.scale(g.mean(g.row_cosine(pred, target)), -1.0))
    total = g.add(g.scale(mse, cfg.lambda_mse), g.scale(cos, cfg.lambda_cos))
    return total, mse, cos


def fit_norm_stats(training_binder_embeddings: Iterable[np.ndarray]) -> NormStats:
    """
    Per-dimension mean/std pooled over every residue row of every
    training binder; std is floored at STD_FLOOR.

    Raises:
        InvalidArgumentError: If no embeddings are given
        ShapeError: If the matrices disagree on width
    """
    mats = [np.asarray(m, dtype=np.float64) for m in training_binder_embeddings]
    if not mats:
        raise InvalidArgumentError("cannot fit normalization statistics on an empty set")
    widths = {m.shape[1] for m in mats}
    if len(widths) != 1:
        raise ShapeError(f"embedding widths disagree: {sorted(widths)}")
    rows = np.concatenate(mats, axis=0)
    mean = rows.mean(axis=0)
    std = np.maximum(rows.std(axis=0), STD_FLOOR)
    logger.info(f"Fitted z-transform on {rows.shape[0]} rows from {len(mats)} binders")
    return NormStats(mean=mean.astype(np.float32), std=std.astype(np.float32))


class Adam:
    """Adam optimizer over a named parameter map"""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, grad in grads.items():
            grad = grad.astype(np.float64)
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            self.m[name], self.v[name] = m, v
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            params[name] = (params[name] - update).astype(np.float32)


def _normalized(examples: Sequence[TrainingExample], stats: NormStats) -> List[TrainingExample]:
    return [
        TrainingExample(
            record_id=ex.record_id,
            receptor=stats.normalize(np.asarray(ex.receptor, dtype=np.float32)),
            pocket=ex.pocket,
            binder=stats.normalize(np.asarray(ex.binder, dtype=np.float32)),
        )
        for ex in examples
    ]


def _check_dataset(model: DenoiserModel, dataset: Sequence[TrainingExample]) -> None:
    lengths = {ex.binder.shape[0] for ex in dataset}
    if len(lengths) > 1:
        raise InvalidArgumentError(f"binder lengths must be equal within a run, got {sorted(lengths)}")
    for ex in dataset:
        check_inputs(model.config, ex.binder, ex.receptor, ex.pocket, 1)


def _batch_objective(
    model: DenoiserModel,
    batch: Sequence[TrainingExample],
    sched: NoiseSchedule,
    cfg: TrainConfig,
    rng: np.random.Generator,
    train_mode: bool,
) -> Tuple[Graph, Tensor, float, float]:
    dropout_seed = int(rng.integers(0, 2**31 - 1))
    g = Graph(model.parameters, train=train_mode, seed=dropout_seed, frozen=FROZEN_PARAMETERS)
    total = None
    mse_sum = cos_sum = 0.0
    for ex in batch:
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(ex.binder.shape).astype(np.float32)
        x_t = q_sample(ex.binder, t, eps, sched)
        pred = build_prediction(g, model.config, g.constant(x_t), g.constant(ex.receptor), ex.pocket, t)
        loss, mse, cos = loss_on_graph(g, pred, g.constant(eps), cfg)
        mse_sum += float(mse.data)
        cos_sum += float(cos.data)
        total = loss if total is None else g.add(total, loss)
    total = g.scale(total, 1.0 / len(batch))
    return g, total, mse_sum / len(batch), cos_sum / len(batch)


def evaluate_loss(
    model: DenoiserModel,
    dataset: Sequence[TrainingExample],
    sched: NoiseSchedule,
    cfg: TrainConfig,
    seed: int = 0,
    normalized: bool = False,
) -> float:
    """Mean objective over `dataset` in eval mode with a fixed noise seed"""
    if not dataset:
        raise InvalidArgumentError("cannot evaluate on an empty dataset")
    examples = list(dataset) if normalized else _normalized(dataset, model.norm_stats)
    rng = np.random.default_rng(seed)
    losses = []
    for start in range(0, len(examples), cfg.batch_size):
        _, total, _, _ = _batch_objective(model, examples[start:start + cfg.batch_size], sched, cfg, rng, False)
        losses.append(float(total.data))
    return float(np.mean(losses))


def train(
    model: DenoiserModel,
    dataset: Sequence[TrainingExample],
    sched: NoiseSchedule,
    cfg: TrainConfig,
    val_dataset: Optional[Sequence[TrainingExample]] = None,
    fit_stats: Optional[bool] = None,
) -> Tuple[DenoiserModel, List[EpochLoss]]:
    """
    Trains the denoiser on receptor/binder pairs.

    Per step: shuffle-order batch, t ~ U{1..T} per example, eps ~ N(0, I),
    x_t by q_sample in normalized space, noise prediction, the combined
    objective, backward and an Adam update at the warmup learning rate.

    Args:
        model: Model to update in place (parameters and norm_stats)
        dataset: Training examples with raw (un-normalized) embeddings
        sched: Noise schedule; must match model.config.T
        cfg: Optimization settings
        val_dataset: Optional validation examples, evaluated each epoch
        fit_stats: Fit norm_stats on the training binders; defaults to True
            for a fresh model and False when resuming

    Returns:
        (model, per-epoch loss history)

    Raises:
        InvalidArgumentError: On an empty dataset, mixed binder lengths or a
            schedule/model T mismatch
        TrainingDivergenceError: If the loss becomes non-finite
    """
    if not dataset:
        raise InvalidArgumentError("training dataset is empty")
    if sched.T != model.config.T:
        raise InvalidArgumentError(f"schedule T={sched.T} differs from model T={model.config.T}")
    _check_dataset(model, dataset)

    if fit_stats is None:
        fit_stats = model.trained_epochs == 0
    if fit_stats:
        model.norm_stats = fit_norm_stats(ex.binder for ex in dataset)
    examples = _normalized(dataset, model.norm_stats)
    val_examples = _normalized(val_dataset, model.norm_stats) if val_dataset else None

    steps_per_epoch = math.ceil(len(examples) / cfg.batch_size)
    warmup = WarmupSpec(
        base_lr=cfg.base_lr,
        total_steps=cfg.epochs * steps_per_epoch,
        warmup_fraction=cfg.warmup_fraction,
    )
    optimizer = Adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    history: List[EpochLoss] = []
    step = 0
    first_epoch = model.trained_epochs

    logger.info(
        f"Training on {len(examples)} examples for {cfg.epochs} epochs "
        f"({steps_per_epoch} steps/epoch, base lr {cfg.base_lr})"
    )
    for epoch in range(first_epoch, first_epoch + cfg.epochs):
        order = rng.permutation(len(examples))
        totals, mses, coss = [], [], []
        lr = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [examples[i] for i in order[start:start + cfg.batch_size]]
            step += 1
            g, total, mse, cos = _batch_objective(model, batch, sched, cfg, rng, True)
            loss_value = float(total.data)
            if not math.isfinite(loss_value):
                logger.error(f"Non-finite loss at step {step}")
                raise TrainingDivergenceError(step, loss_value)
            grads = g.backward(total)
            lr = warmup_lr(warmup, step)
            optimizer.step(model.parameters, grads, lr)
            totals.append(loss_value)
            mses.append(mse)
            coss.append(cos)

        record = EpochLoss(
            epoch=epoch + 1,
            mean_loss=float(np.mean(totals)),
            mse_component=float(np.mean(mses)),
            cos_component=float(np.mean(coss)),
            lr=lr,
        )
        if val_examples:
            record.val_loss = evaluate_loss(model, val_examples, sched, cfg, seed=cfg.seed, normalized=True)
        history.append(record)
        model.trained_epochs = epoch + 1
        if (epoch + 1 - first_epoch) % cfg.log_every == 0 or epoch + 1 == first_epoch + cfg.epochs:
            logger.info(f"Epoch {epoch + 1}: loss={record.mean_loss:.4f} lr={lr:.2e}")

    return model, history


def loss_history_csv(history: Sequence[EpochLoss]) -> str:
    """CSV with columns epoch, mean_loss, mse_component, cos_component, lr (+ val_loss)"""
    with_val = any(h.val_loss is not None for h in history)
    buf = io.StringIO()
    buf.write("epoch,mean_loss,mse_component,cos_component,lr" + (",val_loss" if with_val else "") + "\n")
    for h in history:
        row = f"{h.epoch},{h.mean_loss:.8g},{h.mse_component:.8g},{h.cos_component:.8g},{h.lr:.8g}"
        if with_val:
            row += f",{'' if h.val_loss is None else format(h.val_loss, '.8g')}"
        buf.write(row + "\n")
    return buf.getvalue()


def write_loss_history(history: Sequence[EpochLoss], path: Union[str, Path]) -> Path:
    return atomic_write_text(path, loss_history_csv(history))

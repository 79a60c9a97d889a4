"""
Noise-prediction network eps_theta(x_t, z, m, t).

Receptor branch: input projection, self-attention, pocket-masked attention.
Peptide branch: input projection plus a broadcast timestep embedding, then
`layers` blocks of self-attention, cross-attention over the receptor
context, and a GELU feed-forward. Every block is pre-norm with a residual
connection and dropout on its output. No positional encodings are added.
"""
from typing import Dict, List, Optional
import logging
import math

import numpy as np

from peplatent.errors import InvalidArgumentError, ShapeError
from peplatent.models.denoiser import (
    FROZEN_PARAMETERS,
    DenoiserConfig,
    DenoiserModel,
    NormStats,
    PocketMask,
)
from peplatent.services.autodiff import Graph, Tensor

logger = logging.getLogger(__name__)

MASK_LOGIT = -1e9
RECEPTOR_BLOCKS = ("rec_self", "rec_pocket")


def fourier_projection(w: np.ndarray, t_n: float) -> np.ndarray:
    """[sin(2*pi*w*t_n), cos(2*pi*w*t_n)] for an already normalized time"""
    proj = 2.0 * math.pi * np.asarray(w, dtype=np.float64) * t_n
    return np.concatenate([np.sin(proj), np.cos(proj)])


def fourier_time_features(w: np.ndarray, t: int, T: int) -> np.ndarray:
    """
    Gaussian random Fourier features of the timestep t/T.

    Args:
        w: Frozen frequencies, length fourier_dim / 2
        t: Timestep in [1, T]
        T: Number of timesteps

    Returns:
        Vector of length 2 * len(w) with every entry in [-1, 1]

    Raises:
        InvalidArgumentError: If t is outside [1, T]
    """
    if not 1 <= t <= T:
        raise InvalidArgumentError(f"timestep {t} out of range [1, {T}]")
    return fourier_projection(w, t / T)


def _attention_shapes(prefix: str, h: int, with_context_norm: bool) -> Dict[str, tuple]:
    shapes = {
        f"{prefix}.ln.gain": (h,),
        f"{prefix}.ln.bias": (h,),
    }
    if with_context_norm:
        shapes[f"{prefix}.ctx_ln.gain"] = (h,)
        shapes[f"{prefix}.ctx_ln.bias"] = (h,)
    shapes.update({
        f"{prefix}.q.weight": (h, h),
        f"{prefix}.q.bias": (h,),
        # no key bias: it shifts a whole logit row and softmax cancels it
        f"{prefix}.k.weight": (h, h),
        f"{prefix}.v.weight": (h, h),
        f"{prefix}.v.bias": (h,),
        f"{prefix}.o.weight": (h, h),
        f"{prefix}.o.bias": (h,),
    })
    return shapes


def parameter_shapes(cfg: DenoiserConfig) -> Dict[str, tuple]:
    """Ordered map of every parameter name to its shape"""
    d, h, inter, f = cfg.d_emb, cfg.hidden, cfg.intermediate, cfg.fourier_features
    shapes: Dict[str, tuple] = {
        "rec_in.weight": (d, h),
        "rec_in.bias": (h,),
    }
    for block in RECEPTOR_BLOCKS:
        shapes.update(_attention_shapes(block, h, with_context_norm=False))
    shapes.update({
        "pep_in.weight": (d, h),
        "pep_in.bias": (h,),
        "time.fourier_w": (f // 2,),
        "time.fc1.weight": (f, h),
        "time.fc1.bias": (h,),
        "time.fc2.weight": (h, h),
        "time.fc2.bias": (h,),
    })
    for i in range(cfg.layers):
        shapes.update(_attention_shapes(f"layers.{i}.self", h, with_context_norm=False))
        shapes.update(_attention_shapes(f"layers.{i}.cross", h, with_context_norm=True))
        shapes.update({
            f"layers.{i}.ffn.ln.gain": (h,),
            f"layers.{i}.ffn.ln.bias": (h,),
            f"layers.{i}.ffn.fc1.weight": (h, inter),
            f"layers.{i}.ffn.fc1.bias": (inter,),
            f"layers.{i}.ffn.fc2.weight": (inter, h),
            f"layers.{i}.ffn.fc2.bias": (h,),
        })
    shapes.update({
        "out.ln.gain": (h,),
        "out.ln.bias": (h,),
        "out.weight": (h, d),
        "out.bias": (d,),
    })
    return shapes


def init_model(cfg: DenoiserConfig) -> DenoiserModel:
    """
    Initializes a denoiser from its config.

    Weight matrices are drawn from N(0, 1/fan_in), biases are zero,
    layer-norm gains are one and the frozen Fourier frequencies are drawn
    from N(0, fourier_scale^2). All draws come from one generator seeded
    with cfg.seed, in parameter order.

    Raises:
        ConfigurationError: If the config violates its invariants
    """
    cfg.check()
    rng = np.random.default_rng(cfg.seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(cfg).items():
        if name == "time.fourier_w":
            value = rng.standard_normal(shape) * cfg.fourier_scale
        elif name.endswith(".gain"):
            value = np.ones(shape)
        elif name.endswith(".bias"):
            value = np.zeros(shape)
        else:
            value = rng.standard_normal(shape) / math.sqrt(shape[0])
        params[name] = value.astype(np.float32)

    model = DenoiserModel(config=cfg, parameters=params, norm_stats=NormStats.identity(cfg.d_emb))
    logger.info(f"Initialized denoiser with {model.parameter_count()} parameters")
    return model


def _linear(g: Graph, x: Tensor, prefix: str, bias: bool = True) -> Tensor:
    out = g.matmul(x, g.param(f"{prefix}.weight"))
    if bias:
        out = g.add(out, g.param(f"{prefix}.bias"))
    return out


def _layer_norm(g: Graph, x: Tensor, prefix: str) -> Tensor:
    return g.layer_norm(x, g.param(f"{prefix}.gain"), g.param(f"{prefix}.bias"))


def _attention(
    g: Graph,
    cfg: DenoiserConfig,
    prefix: str,
    query: Tensor,
    context: Tensor,
    mask_bias: Optional[Tensor] = None,
    trace: Optional[Dict[str, List[np.ndarray]]] = None,
) -> Tensor:
    q = _linear(g, query, f"{prefix}.q")
    k = _linear(g, context, f"{prefix}.k", bias=False)
    v = _linear(g, context, f"{prefix}.v")
    dh = cfg.head_dim
    heads = []
    for head in range(cfg.heads):
        lo, hi = head * dh, (head + 1) * dh
        qh = g.slice_cols(q, lo, hi)
        kh = g.slice_cols(k, lo, hi)
        vh = g.slice_cols(v, lo, hi)
        logits = g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / math.sqrt(dh))
        if mask_bias is not None:
            logits = g.add(logits, mask_bias)
        probs = g.softmax(logits)
        if trace is not None:
            trace.setdefault(prefix, []).append(probs.data)
        heads.append(g.matmul(probs, vh))
    merged = heads[0] if len(heads) == 1 else g.concat(heads, axis=-1)
    return _linear(g, merged, f"{prefix}.o")


def _self_block(g, cfg, prefix, x, mask_bias=None, trace=None) -> Tensor:
    normed = _layer_norm(g, x, f"{prefix}.ln")
    update = _attention(g, cfg, prefix, normed, normed, mask_bias, trace)
    return g.add(x, g.dropout(update, cfg.dropout))


def _cross_block(g, cfg, prefix, x, context, trace=None) -> Tensor:
    normed = _layer_norm(g, x, f"{prefix}.ln")
    ctx = _layer_norm(g, context, f"{prefix}.ctx_ln")
    update = _attention(g, cfg, prefix, normed, ctx, None, trace)
    return g.add(x, g.dropout(update, cfg.dropout))


def _ffn_block(g, cfg, prefix, x) -> Tensor:
    normed = _layer_norm(g, x, f"{prefix}.ln")
    hidden = g.dropout(g.gelu(_linear(g, normed, f"{prefix}.fc1")), cfg.dropout)
    update = _linear(g, hidden, f"{prefix}.fc2")
    return g.add(x, g.dropout(update, cfg.dropout))


def pocket_mask_bias(g: Graph, mask: Optional[PocketMask]) -> Optional[Tensor]:
    """Additive key bias: 0 for pocket keys, MASK_LOGIT elsewhere; None disables masking"""
    if mask is None:
        return None
    bias = np.where(mask.bits == 1, 0.0, MASK_LOGIT)[None, :]
    return g.constant(bias, name="pocket_bias")


def receptor_context(
    g: Graph,
    cfg: DenoiserConfig,
    z: Tensor,
    mask: Optional[PocketMask],
    trace: Optional[Dict[str, List[np.ndarray]]] = None,
) -> Tensor:
    """Receptor branch: projection, self-attention, pocket-masked attention -> z_pocket"""
    h = _linear(g, z, "rec_in")
    h = _self_block(g, cfg, "rec_self", h, None, trace)
    return _self_block(g, cfg, "rec_pocket", h, pocket_mask_bias(g, mask), trace)


def time_embedding(g: Graph, cfg: DenoiserConfig, t: int) -> Tensor:
    w = g.param("time.fourier_w").data
    feats = g.constant(fourier_time_features(w, t, cfg.T)[None, :], name="fourier")
    return _linear(g, g.gelu(_linear(g, feats, "time.fc1")), "time.fc2")


def build_prediction(
    g: Graph,
    cfg: DenoiserConfig,
    x_t: Tensor,
    z: Tensor,
    mask: Optional[PocketMask],
    t: int,
    trace: Optional[Dict[str, List[np.ndarray]]] = None,
) -> Tensor:
    """Records the full eps_theta computation on `g` and returns the prediction"""
    context = receptor_context(g, cfg, z, mask, trace)
    h = g.add(_linear(g, x_t, "pep_in"), time_embedding(g, cfg, t))
    for i in range(cfg.layers):
        h = _self_block(g, cfg, f"layers.{i}.self", h, None, trace)
        h = _cross_block(g, cfg, f"layers.{i}.cross", h, context, trace)
        h = _ffn_block(g, cfg, f"layers.{i}.ffn", h)
    return _linear(g, _layer_norm(g, h, "out.ln"), "out")


def check_inputs(cfg: DenoiserConfig, x_t: np.ndarray, z: np.ndarray, mask: Optional[PocketMask], t: int) -> None:
    """
    Raises:
        ShapeError: If x_t, z or the mask disagree with the config or each other
        InvalidArgumentError: If t is outside [1, T]
    """
    if x_t.ndim != 2 or x_t.shape[0] < 1 or x_t.shape[1] != cfg.d_emb:
        raise ShapeError(f"x_t must be (L', {cfg.d_emb}), got {x_t.shape}")
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] != cfg.d_emb:
        raise ShapeError(f"z must be (L, {cfg.d_emb}), got {z.shape}")
    if mask is not None and len(mask) != z.shape[0]:
        raise ShapeError(f"pocket mask length {len(mask)} != receptor length {z.shape[0]}")
    if not 1 <= t <= cfg.T:
        raise InvalidArgumentError(f"timestep {t} out of range [1, {cfg.T}]")


def predict_noise(
    model: DenoiserModel,
    x_t: np.ndarray,
    z: np.ndarray,
    m: Optional[PocketMask],
    t: int,
    train_mode: bool = False,
    seed: int = 0,
    trace: Optional[Dict[str, List[np.ndarray]]] = None,
) -> np.ndarray:
    """
    Predicts the noise in x_t given the (normalized) receptor embedding.

    Args:
        model: Denoiser parameters and config
        x_t: Noisy peptide embedding, shape (L', d_emb)
        z: Receptor embedding already z-transformed, shape (L, d_emb)
        m: Pocket mask over receptor rows; None disables pocket masking
        t: Timestep in [1, T]
        train_mode: Enables dropout
        seed: Dropout mask seed (ignored in eval mode)
        trace: Optional dict collecting attention probabilities per block

    Returns:
        Predicted noise with the shape of x_t
    """
    cfg = model.config
    check_inputs(cfg, x_t, z, m, t)
    g = Graph(model.parameters, {"x_t": x_t, "z": z}, train=train_mode, seed=seed, frozen=FROZEN_PARAMETERS)
    out = build_prediction(g, cfg, g.input("x_t"), g.input("z"), m, t, trace)
    return out.data

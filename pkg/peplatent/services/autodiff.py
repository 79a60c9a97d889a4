"""
Reverse-mode differentiation over a recorded tape of numpy primitives.

A Graph is a tape: every primitive call evaluates eagerly and appends a
node, so the node list is topologically ordered by construction. Backward
walks the tape in reverse and accumulates gradients into per-graph
buffers, leaving the shared parameter arrays untouched.

Only the primitives the denoiser and its losses need are provided.
"""
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union
import logging
import math

import numpy as np
from scipy.special import erf

from peplatent.errors import InvalidArgumentError, ShapeError
from peplatent.models.reports import GradCheckReport

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5
_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """A value on the tape, optionally tracking gradient"""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data: np.ndarray, requires_grad: bool = False, name: Optional[str] = None):
        self.data = data
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"


class Node:
    __slots__ = ("op", "index", "inputs", "output", "backward_fn")

    def __init__(self, op: str, index: int, inputs: Sequence[Tensor], output: Tensor, backward_fn):
        self.op = op
        self.index = index
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sums `grad` down to `shape` after numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Graph:
    """
    Tape of primitive nodes.

    Args:
        params: Named parameter arrays (read-only from the graph's view)
        inputs: Named input arrays
        dtype: float32 for production, float64 for gradient checks
        train: Enables dropout
        seed: Seed of the dropout mask generator
        frozen: Parameter names that never receive gradient
    """

    def __init__(
        self,
        params: Optional[Mapping[str, np.ndarray]] = None,
        inputs: Optional[Mapping[str, np.ndarray]] = None,
        dtype: Union[type, np.dtype] = np.float32,
        train: bool = False,
        seed: int = 0,
        frozen: Iterable[str] = (),
    ):
        self.dtype = np.dtype(dtype)
        self.train = train
        self.nodes: List[Node] = []
        self.params: Dict[str, Tensor] = {}
        self.inputs: Dict[str, Tensor] = {}
        self.outputs: Dict[str, Tensor] = {}
        self._param_source = dict(params or {})
        self._input_source = dict(inputs or {})
        self._frozen = frozenset(frozen)
        self._rng = np.random.default_rng(seed)

    # leaves

    def param(self, name: str) -> Tensor:
        if name not in self.params:
            if name not in self._param_source:
                raise InvalidArgumentError(f"unknown parameter '{name}'")
            data = np.array(self._param_source[name], dtype=self.dtype)
            self.params[name] = Tensor(data, requires_grad=name not in self._frozen, name=name)
        return self.params[name]

    def input(self, name: str) -> Tensor:
        if name not in self.inputs:
            if name not in self._input_source:
                raise InvalidArgumentError(f"missing input '{name}'")
            data = np.array(self._input_source[name], dtype=self.dtype)
            self.inputs[name] = Tensor(data, requires_grad=False, name=name)
        return self.inputs[name]

    def constant(self, value, name: Optional[str] = None) -> Tensor:
        return Tensor(np.asarray(value, dtype=self.dtype), requires_grad=False, name=name)

    def mark_output(self, name: str, tensor: Tensor) -> Tensor:
        self.outputs[name] = tensor
        return tensor

    def _record(self, op: str, inputs: Sequence[Tensor], data: np.ndarray, backward_fn) -> Tensor:
        out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
        self.nodes.append(Node(op, len(self.nodes), inputs, out, backward_fn))
        return out

    def _shape_error(self, op: str, message: str) -> ShapeError:
        return ShapeError(f"node #{len(self.nodes)} ({op}): {message}")

    # primitives

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
            raise self._shape_error("matmul", f"cannot multiply {a.shape} by {b.shape}")

        def backward(g):
            return g @ b.data.T, a.data.T @ g

        return self._record("matmul", (a, b), a.data @ b.data, backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data + b.data
        except ValueError as e:
            raise self._shape_error("add", f"cannot broadcast {a.shape} with {b.shape}") from e

        def backward(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._record("add", (a, b), out, backward)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data * b.data
        except ValueError as e:
            raise self._shape_error("mul", f"cannot broadcast {a.shape} with {b.shape}") from e

        def backward(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return self._record("mul", (a, b), out, backward)

    def scale(self, x: Tensor, c: float) -> Tensor:
        c = self.dtype.type(c)

        def backward(g):
            return (g * c,)

        return self._record("scale", (x,), x.data * c, backward)

    def softmax(self, x: Tensor) -> Tensor:
        """Softmax over the last axis with row-max subtraction"""
        shifted = x.data - x.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

        return self._record("softmax", (x,), y, backward)

    def layer_norm(self, x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
        n = x.shape[-1]
        if gain.shape != (n,) or bias.shape != (n,):
            raise self._shape_error("layer_norm", f"affine shapes {gain.shape}/{bias.shape} for width {n}")
        mu = x.data.mean(axis=-1, keepdims=True)
        centered = x.data - mu
        var = (centered ** 2).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        xhat = centered * inv_std

        def backward(g):
            dxhat = g * gain.data
            dx = inv_std / n * (
                n * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            dgain = (g * xhat).reshape(-1, n).sum(axis=0)
            dbias = g.reshape(-1, n).sum(axis=0)
            return dx, dgain, dbias

        return self._record("layer_norm", (x, gain, bias), xhat * gain.data + bias.data, backward)

    def gelu(self, x: Tensor) -> Tensor:
        """Exact GELU, x * Phi(x)"""
        cdf = 0.5 * (1.0 + erf(x.data / _SQRT_2))

        def backward(g):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data ** 2)
            return (g * (cdf + x.data * pdf),)

        return self._record("gelu", (x,), (x.data * cdf).astype(self.dtype), backward)

    def dropout(self, x: Tensor, p: float) -> Tensor:
        """Inverted dropout; identity in eval mode or when p == 0"""
        if not self.train or p <= 0.0:
            return x
        keep = (self._rng.random(x.shape) >= p).astype(self.dtype) / self.dtype.type(1.0 - p)

        def backward(g):
            return (g * keep,)

        return self._record("dropout", (x,), x.data * keep, backward)

    def concat(self, tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
        try:
            out = np.concatenate([t.data for t in tensors], axis=axis)
        except ValueError as e:
            raise self._shape_error("concat", str(e)) from e
        bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

        def backward(g):
            return tuple(np.split(g, bounds, axis=axis))

        return self._record("concat", tuple(tensors), out, backward)

    def mean(self, x: Tensor, axis: Optional[int] = None) -> Tensor:
        out = x.data.mean(axis=axis)
        count = x.data.size if axis is None else x.shape[axis]

        def backward(g):
            g = g if axis is None else np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, x.shape).copy(),)

        return self._record("mean", (x,), np.asarray(out, dtype=self.dtype), backward)

    def transpose(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2:
            raise self._shape_error("transpose", f"expected a matrix, got {x.shape}")

        def backward(g):
            return (g.T,)

        return self._record("transpose", (x,), x.data.T, backward)

    def slice_cols(self, x: Tensor, start: int, stop: int) -> Tensor:
        if not 0 <= start < stop <= x.shape[-1]:
            raise self._shape_error("slice_cols", f"[{start}:{stop}] outside width {x.shape[-1]}")

        def backward(g):
            full = np.zeros_like(x.data)
            full[..., start:stop] = g
            return (full,)

        return self._record("slice_cols", (x,), x.data[..., start:stop], backward)

    def row_cosine(self, a: Tensor, b: Tensor) -> Tensor:
        """Cosine similarity of matching rows; rows with zero norm give 0"""
        if a.shape != b.shape or a.data.ndim != 2:
            raise self._shape_error("row_cosine", f"shapes {a.shape} and {b.shape}")
        na = np.linalg.norm(a.data, axis=1)
        nb = np.linalg.norm(b.data, axis=1)
        valid = (na > 0) & (nb > 0)
        denom = np.where(valid, na * nb, 1.0)
        cos = np.where(valid, (a.data * b.data).sum(axis=1) / denom, 0.0)

        def backward(g):
            gv = np.where(valid, g, 0.0)[:, None]
            safe_na = np.where(valid, na, 1.0)[:, None]
            safe_nb = np.where(valid, nb, 1.0)[:, None]
            d = denom[:, None]
            c = cos[:, None]
            da = gv * (b.data / d - c * a.data / safe_na ** 2)
            db = gv * (a.data / d - c * b.data / safe_nb ** 2)
            return da, db

        return self._record("row_cosine", (a, b), cos.astype(self.dtype), backward)

    # reverse pass

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        """
        Back-propagates from a scalar tensor.

        Returns:
            dict mapping every trainable parameter name touched by the graph
            to its gradient (zeros when unreachable from the loss)

        Raises:
            InvalidArgumentError: If `loss` is not a scalar
        """
        if loss.data.size != 1:
            raise InvalidArgumentError(f"loss must be scalar, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None or not node.output.requires_grad:
                continue
            for inp, gi in zip(node.inputs, node.backward_fn(g)):
                if not inp.requires_grad or gi is None:
                    continue
                key = id(inp)
                grads[key] = grads[key] + gi if key in grads else gi

        result: Dict[str, np.ndarray] = {}
        for name, tensor in self.params.items():
            if not tensor.requires_grad:
                continue
            tensor.grad = grads.get(id(tensor), np.zeros_like(tensor.data))
            result[name] = tensor.grad
        return result


Builder = Callable[[Graph], Union[Tensor, Dict[str, Tensor]]]


def forward(
    build: Builder,
    params: Mapping[str, np.ndarray],
    inputs: Optional[Mapping[str, np.ndarray]] = None,
    *,
    dtype=np.float32,
    train: bool = False,
    seed: int = 0,
    frozen: Iterable[str] = (),
) -> tuple[Graph, Dict[str, np.ndarray]]:
    """
    Runs `build` on a fresh graph and returns the graph plus its outputs.

    `build` returns either one tensor (recorded as output "out") or a dict
    of named tensors.
    """
    graph = Graph(params, inputs, dtype=dtype, train=train, seed=seed, frozen=frozen)
    result = build(graph)
    if isinstance(result, Tensor):
        result = {"out": result}
    for name, tensor in result.items():
        graph.mark_output(name, tensor)
    return graph, {name: t.data for name, t in graph.outputs.items()}


def backward(graph: Graph, loss_node: str = "out") -> Dict[str, np.ndarray]:
    """Gradients of the named scalar output with respect to every trainable parameter"""
    if loss_node not in graph.outputs:
        raise InvalidArgumentError(f"graph has no output named '{loss_node}'")
    return graph.backward(graph.outputs[loss_node])


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)


def grad_check(
    build: Builder,
    params: Mapping[str, np.ndarray],
    inputs: Optional[Mapping[str, np.ndarray]] = None,
    *,
    seed: int = 0,
    eps: float = 1e-5,
    train: bool = False,
    frozen: Iterable[str] = (),
    loss_node: str = "out",
    max_entries: int = 64,
) -> GradCheckReport:
    """
    Compares analytic gradients with central finite differences in float64.

    Tensors larger than `max_entries` are checked on a seeded subset of
    their entries. The dropout seed is reused for every evaluation so each
    perturbed pass sees the same masks.

    Returns:
        GradCheckReport with the relative error per parameter tensor
    """
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be > 0, got {eps}")
    base = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    frozen = frozenset(frozen)

    def loss_at(values: Mapping[str, np.ndarray]) -> float:
        _, outputs = forward(build, values, inputs, dtype=np.float64, train=train, seed=seed, frozen=frozen)
        return float(outputs[loss_node])

    graph, _ = forward(build, base, inputs, dtype=np.float64, train=train, seed=seed, frozen=frozen)
    analytic = backward(graph, loss_node)

    picker = np.random.default_rng(seed)
    report = GradCheckReport(eps=eps)
    for name, grad in analytic.items():
        flat_size = base[name].size
        if flat_size <= max_entries:
            entries = np.arange(flat_size)
        else:
            entries = np.sort(picker.choice(flat_size, size=max_entries, replace=False))
        numeric = np.empty(entries.size)
        for k, idx in enumerate(entries):
            perturbed = dict(base)
            plus = base[name].copy()
            plus.flat[idx] += eps
            perturbed[name] = plus
            f_plus = loss_at(perturbed)
            minus = base[name].copy()
            minus.flat[idx] -= eps
            perturbed[name] = minus
            f_minus = loss_at(perturbed)
            numeric[k] = (f_plus - f_minus) / (2.0 * eps)
        report.max_relative_error[name] = _relative_error(grad.ravel()[entries], numeric)
        report.checked_entries[name] = int(entries.size)

    logger.debug(f"Gradient check worst relative error: {report.worst:.3e}")
    return report

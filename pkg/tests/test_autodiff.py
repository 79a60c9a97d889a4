import numpy as np
import pytest
from scipy.special import erf

from peplatent.errors import InvalidArgumentError, ShapeError
from peplatent.services.autodiff import Graph, backward, forward, grad_check

TOL = 1e-4


def weighted_sum(g, out, seed=7):
    """Scalar loss mean(out * W) with a fixed random W, so no gradient cancels by symmetry"""
    w = np.random.default_rng(seed).standard_normal(out.shape)
    return g.mean(g.mul(out, g.constant(w)))


@pytest.fixture
def params():
    r = np.random.default_rng(0)
    return {
        "a": r.standard_normal((3, 4)),
        "b": r.standard_normal((4, 5)),
        "c": r.standard_normal((3, 4)),
        "row": r.standard_normal((4,)),
        "gain": 1.0 + 0.1 * r.standard_normal((4,)),
        "bias": 0.1 * r.standard_normal((4,)),
    }


PRIMITIVES = {
    "matmul": lambda g: g.matmul(g.param("a"), g.param("b")),
    "add_broadcast": lambda g: g.add(g.param("a"), g.param("row")),
    "mul": lambda g: g.mul(g.param("a"), g.param("c")),
    "scale": lambda g: g.scale(g.param("a"), -2.5),
    "softmax": lambda g: g.softmax(g.param("a")),
    "layer_norm": lambda g: g.layer_norm(g.param("a"), g.param("gain"), g.param("bias")),
    "gelu": lambda g: g.gelu(g.param("a")),
    "dropout": lambda g: g.dropout(g.param("a"), 0.3),
    "concat": lambda g: g.concat([g.param("a"), g.param("c")], axis=-1),
    "mean_axis0": lambda g: g.mean(g.param("a"), axis=0),
    "transpose": lambda g: g.transpose(g.param("a")),
    "slice_cols": lambda g: g.slice_cols(g.param("a"), 1, 3),
    "row_cosine": lambda g: g.row_cosine(g.param("a"), g.param("c")),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name, params):
    op = PRIMITIVES[name]

    def build(g):
        return weighted_sum(g, op(g))

    report = grad_check(build, params, train=True, seed=3)
    assert report.worst < TOL, report.max_relative_error


def test_untouched_parameters_get_zero_gradient(params):
    graph, _ = forward(lambda g: g.mean(g.param("a")), params, dtype=np.float64)
    grads = backward(graph)
    assert set(grads) == {"a"}
    assert np.allclose(grads["a"], 1.0 / 12)


def test_frozen_parameters_receive_no_gradient(params):
    def build(g):
        return g.mean(g.mul(g.param("a"), g.param("c")))

    graph, _ = forward(build, params, dtype=np.float64, frozen={"c"})
    grads = backward(graph)
    assert "c" not in grads
    assert np.allclose(grads["a"], params["c"] / 12)


def test_gradient_accumulates_over_reuse(params):
    def build(g):
        a = g.param("a")
        return g.mean(g.add(a, a))

    graph, _ = forward(build, params, dtype=np.float64)
    assert np.allclose(backward(graph)["a"], 2.0 / 12)


def test_backward_needs_scalar(params):
    graph, _ = forward(lambda g: g.param("a"), params, dtype=np.float64)
    with pytest.raises(InvalidArgumentError):
        backward(graph)


def test_matmul_shape_mismatch_names_the_node(params):
    g = Graph(params, dtype=np.float64)
    with pytest.raises(ShapeError, match="matmul"):
        g.matmul(g.param("a"), g.param("c"))


def test_gelu_is_exact():
    x = np.linspace(-3, 3, 13)
    _, out = forward(lambda g: g.gelu(g.input("x")), {}, {"x": x}, dtype=np.float64)
    assert np.allclose(out["out"], x * 0.5 * (1 + erf(x / np.sqrt(2))))


def test_softmax_rows_sum_to_one():
    x = np.array([[1000.0, 1000.0, -1000.0], [0.0, 1.0, 2.0]])
    _, out = forward(lambda g: g.softmax(g.input("x")), {}, {"x": x}, dtype=np.float64)
    assert np.allclose(out["out"].sum(axis=1), 1.0)
    assert np.allclose(out["out"][0], [0.5, 0.5, 0.0])


def test_dropout_identity_in_eval_mode(params):
    _, out = forward(lambda g: g.dropout(g.param("a"), 0.5), params, dtype=np.float64, train=False)
    assert np.array_equal(out["out"], params["a"])


def test_dropout_masks_are_seeded(params):
    build = lambda g: g.dropout(g.param("a"), 0.5)  # noqa: E731
    _, first = forward(build, params, dtype=np.float64, train=True, seed=11)
    _, second = forward(build, params, dtype=np.float64, train=True, seed=11)
    assert np.array_equal(first["out"], second["out"])
    kept = first["out"] != 0
    assert np.allclose(first["out"][kept], 2.0 * params["a"][kept])


def test_row_cosine_zero_row_gives_zero():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[1.0, 1.0], [0.0, 1.0]])
    _, out = forward(lambda g: g.row_cosine(g.input("a"), g.input("b")), {}, {"a": a, "b": b}, dtype=np.float64)
    assert np.array_equal(out["out"], [0.0, 0.0])


def test_large_tensor_checked_on_subset():
    big = {"w": np.random.default_rng(0).standard_normal((20, 20))}
    report = grad_check(lambda g: weighted_sum(g, g.gelu(g.param("w"))), big, max_entries=16)
    assert report.checked_entries["w"] == 16
    assert report.worst < TOL

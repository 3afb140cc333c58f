import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orcomplex import numerics as nx
from orcomplex.numerics import (
    Adam,
    AllMasked,
    IndexOutOfRange,
    NoTape,
    NonFiniteValue,
    Parameter,
    RngStream,
    Segments,
    ShapeMismatch,
    Tensor,
)
from orcomplex.numerics.gradcheck import finite_diff_grad, max_relative_error

def analytic(f, params):
    for p in params:
        p.zero_grad()
    nx.backward(f())
    return {p.name: p.grad.copy() for p in params}


def test_matmul_identity_and_shapes():
    x = Tensor(np.arange(3.0))
    assert np.array_equal(nx.matmul(Tensor(np.eye(3)), x).data, x.data)
    assert nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4)))).shape == (2, 4)
    with pytest.raises(ShapeMismatch):
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    a = Parameter(rng.normal(size=(5, 5)), "a")
    b = Parameter(rng.normal(size=(5, 5)), "b")
    w = rng.normal(size=(5, 5))

    def f():
        return (nx.matmul(a, b) * Tensor(w)).sum()

    assert max_relative_error(analytic(f, [a, b]), finite_diff_grad(f, [a, b], 1e-5)) < 1e-6


def test_softmax_examples():
    assert np.allclose(nx.softmax_row(Tensor(np.zeros(3))).data, 1 / 3, atol=0, rtol=1e-15)
    x = np.array([0.3, -1.2, 2.0])
    assert np.allclose(nx.softmax_row(Tensor(x + 7.5)).data, nx.softmax_row(Tensor(x)).data, atol=1e-15)
    out = nx.softmax_row(Tensor(x), np.array([True, False, True])).data
    assert out[1] == 0.0
    assert abs(out.sum() - 1) < 1e-12
    with pytest.raises(AllMasked):
        nx.softmax_row(Tensor(x), np.zeros(3, dtype=bool))


def test_softmax_gradient():
    p = Parameter(np.array([1.0, 2.0, 3.0]), "x")
    w = np.array([0.5, -1.0, 2.0])

    def f():
        return (nx.softmax_row(p) * Tensor(w)).sum()

    assert max_relative_error(analytic(f, [p]), finite_diff_grad(f, [p], 1e-5)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)), st.data())
def test_softmax_is_probability_vector(x, data):
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=x.size, max_size=x.size)))
    mask[data.draw(st.integers(0, x.size - 1))] = True
    out = nx.softmax_row(Tensor(x), mask).data
    assert np.all(out[~mask] == 0.0)
    assert np.all(out >= 0)
    assert abs(out.sum() - 1.0) < 1e-9


def test_cross_entropy_values_and_errors():
    K = 5
    assert math.isclose(nx.cross_entropy(Tensor(np.zeros(K)), 2).item(), math.log(K), rel_tol=1e-14)
    big = np.zeros(K)
    big[1] = 60.0
    assert nx.cross_entropy(Tensor(big), 1).item() < 1e-20
    with pytest.raises(IndexOutOfRange):
        nx.cross_entropy(Tensor(np.zeros(K)), K)


def test_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    p = Parameter(rng.normal(size=6), "logits")
    q = Parameter(rng.normal(size=(4, 3)), "batch")

    def f():
        return nx.cross_entropy(p, 4) + nx.cross_entropy(q, np.array([0, 2, 1, 2]))

    assert max_relative_error(analytic(f, [p, q]), finite_diff_grad(f, [p, q], 1e-5)) < 1e-6


def test_linear_gradient_is_input_broadcast():
    x = np.array([1.0, -2.0, 3.0])
    W = Parameter(np.ones((2, 3)), "W")
    nx.backward(nx.matmul(W, Tensor(x)).sum())
    assert np.array_equal(W.grad, np.tile(x, (2, 1)))


def test_two_layer_mlp_gradient():
    rng = np.random.default_rng(1)
    W1 = Parameter(rng.normal(size=(4, 6)), "W1")
    b1 = Parameter(rng.normal(size=6), "b1")
    W2 = Parameter(rng.normal(size=(6, 3)), "W2")
    b2 = Parameter(rng.normal(size=3), "b2")
    X = Tensor(rng.normal(size=(5, 4)))
    params = [W1, b1, W2, b2]

    def f():
        h = nx.tanh(nx.matmul(X, W1) + b1)
        return nx.cross_entropy(nx.matmul(h, W2) + b2, np.array([0, 1, 2, 1, 0]))

    assert max_relative_error(analytic(f, params), finite_diff_grad(f, params, 1e-5)) < 1e-4


def test_unreachable_parameter_keeps_zero_grad():
    a = Parameter(np.ones(3), "a")
    unused = Parameter(np.ones(3), "unused")
    nx.backward((a * a).sum())
    assert np.array_equal(unused.grad, np.zeros(3))


def test_backward_requires_recorded_loss():
    with pytest.raises(NoTape):
        nx.backward(Tensor(np.array(1.0)))
    p = Parameter(np.ones(2), "p")
    with nx.no_grad():
        loss = (p * p).sum()
    with pytest.raises(NoTape):
        nx.backward(loss)


def test_tape_cleared_after_backward():
    p = Parameter(np.ones(2), "p")
    nx.backward((p * p).sum())
    assert len(nx.get_tape()) == 0


def test_non_finite_values_raise():
    with pytest.raises(NonFiniteValue):
        Tensor(np.array([np.nan]))
    with pytest.raises(NonFiniteValue), np.errstate(over="ignore"):
        nx.scale(Tensor(np.array([1e308])), 10.0)


def test_finite_diff_examples():
    x = Parameter(np.array([1.0]), "x")
    g = finite_diff_grad(lambda: (x * x).sum(), [x], 1e-5)
    assert abs(g["x"][0] - 2.0) < 1e-8
    c = finite_diff_grad(lambda: Tensor(np.array(4.0)), [x], 1e-5)
    assert np.array_equal(c["x"], np.zeros(1))


@pytest.mark.parametrize("op", ["relu", "tanh", "sigmoid", "log_softmax", "concat", "index", "stack", "mean"])
def test_primitive_gradients(op):
    rng = np.random.default_rng(7)
    a = Parameter(rng.normal(size=(3, 4)) + 0.05, "a")
    b = Parameter(rng.normal(size=(3, 4)), "b")
    w = Tensor(rng.normal(size=(6, 4)))
    fns = {
        "relu": lambda: (nx.relu(a) * b).sum(),
        "tanh": lambda: (nx.tanh(a) * b).sum(),
        "sigmoid": lambda: (nx.sigmoid(a) * b).sum(),
        "log_softmax": lambda: (nx.log_softmax(a) * b).sum(),
        "concat": lambda: (nx.concat([a, b], axis=0) * w).sum(),
        "index": lambda: (nx.take_rows(a, np.array([2, 0, 2])) * nx.slice_rows(b, 0, 3)).sum(),
        "stack": lambda: (nx.stack([a[0], b[1], a[2]]) * nx.slice_rows(b, 0, 3)).sum(),
        "mean": lambda: (a.mean(axis=0) * b.sum(axis=0)).sum(),
    }
    f = fns[op]
    assert max_relative_error(analytic(f, [a, b]), finite_diff_grad(f, [a, b], 1e-5)) < 1e-6


def test_segment_ops_match_loops_and_gradients():
    rng = np.random.default_rng(2)
    ids = np.array([0, 0, 1, 2, 2, 2])
    seg = Segments(ids, 3)
    x = Parameter(rng.normal(size=(6, 2)), "x")
    w = Tensor(rng.normal(size=(6, 2)))
    soft = nx.segment_softmax(x, seg).data
    for s in range(3):
        rows = ids == s
        e = np.exp(x.data[rows] - x.data[rows].max(axis=0))
        assert np.allclose(soft[rows], e / e.sum(axis=0), atol=1e-15)
    summed = nx.segment_sum(x, seg).data
    assert np.allclose(summed, np.array([x.data[ids == s].sum(axis=0) for s in range(3)]), atol=1e-15)

    def f():
        return (nx.segment_softmax(x, seg) * w).sum() + nx.segment_sum(x * w, seg).sum()

    assert max_relative_error(analytic(f, [x]), finite_diff_grad(f, [x], 1e-5)) < 1e-6


def test_segments_reject_unsorted_or_empty():
    with pytest.raises(ValueError):
        Segments(np.array([1, 0]), 2)
    with pytest.raises(ValueError):
        Segments(np.array([0, 2]), 3)


def test_adam_zero_gradient_leaves_parameter():
    p = Parameter(np.array([1.5, -2.0]), "p")
    opt = Adam([p], lr=0.1)
    opt.zero_grad()
    opt.step()
    assert np.array_equal(p.data, [1.5, -2.0])


def test_adam_converges_on_quadratic():
    x = Parameter(np.array([0.0]), "x")
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.zero_grad()
        nx.backward(((x - 3.0) * (x - 3.0)).sum())
        opt.step()
    assert abs(x.data[0] - 3.0) < 1e-2


def test_adam_moves_monotonically_for_repeated_gradient():
    x = Parameter(np.array([0.0]), "x")
    opt = Adam([x], lr=0.01)
    seen = [0.0]
    for _ in range(2):
        x.grad = np.array([-1.0])
        opt.step()
        seen.append(float(x.data[0]))
    assert seen[0] < seen[1] < seen[2] <= 3.0


def test_rng_is_reproducible_and_keyed():
    a = RngStream(42, 1, 2).normal(size=5)
    b = RngStream(42, 1, 2).normal(size=5)
    c = RngStream(42, 1, 3).normal(size=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(RngStream(5).spawn(0).uniform(size=3), RngStream(5).spawn(0).uniform(size=3))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastgrpo.autodiff import Tensor, concat, minimum, no_grad


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        hi = f(x)
        x[idx] = old - h
        lo = f(x)
        x[idx] = old
        g[idx] = (hi - lo) / (2 * h)
    return g


def check_unary(op, x):
    t = Tensor(x.copy(), requires_grad=True)
    op(t).sum().backward()
    num = numeric_grad(lambda a: op(Tensor(a)).sum().item(), x.copy())
    np.testing.assert_allclose(t.grad, num, rtol=1e-6, atol=1e-8)


def test_square_derivative():
    w = Tensor(3.0, requires_grad=True)
    w.square().backward()
    assert w.grad == 6.0


def test_constant_loss_gives_zero_grad():
    w = Tensor(np.ones(3), requires_grad=True)
    (w * 0.0 + 5.0).sum().backward()
    np.testing.assert_array_equal(w.grad, np.zeros(3))


def test_backward_rejects_non_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (w * 2.0).backward()


@pytest.mark.parametrize("op", [
    lambda t: t.tanh(),
    lambda t: t.silu(),
    lambda t: t.exp(),
    lambda t: (t * t + 1.0).log(),
    lambda t: t.square(),
    lambda t: 1.0 / (t * t + 1.0),
    lambda t: 2.0 - t,
    lambda t: t.clip(-0.5, 0.5),
    lambda t: t.mean(axis=0),
    lambda t: t.sum(axis=1) * t.sum(axis=1),
])
def test_elementwise_grads(op, rng):
    x = rng.normal(size=(4, 3))
    # keep clip inputs off the kinks
    x[np.abs(np.abs(x) - 0.5) < 1e-3] += 0.01
    check_unary(op, x)


def test_broadcast_add_mul(rng):
    a = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3,)), requires_grad=True)
    ((a + b) * b).sum().backward()
    np.testing.assert_allclose(b.grad, (a.data + 2 * b.data).sum(axis=0))
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, (5, 3)))


def test_ndarray_on_left_dispatches_to_tensor(rng):
    a = rng.normal(size=(2, 2))
    t = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    out = a - t
    assert isinstance(out, Tensor)
    out.sum().backward()
    np.testing.assert_array_equal(t.grad, -np.ones((2, 2)))


def test_matmul_grad(rng):
    a = rng.normal(size=(4, 3))
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    (Tensor(a) @ w).square().sum().backward()
    np.testing.assert_allclose(w.grad, 2 * a.T @ (a @ w.data))


def test_minimum_routes_ties_to_first():
    a = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    b = Tensor(np.array([1.0, 1.0, 4.0]), requires_grad=True)
    minimum(a, b).sum().backward()
    np.testing.assert_array_equal(a.grad, [1.0, 0.0, 1.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0, 0.0])


def test_concat_grad(rng):
    a = Tensor(rng.normal(size=(2, 1)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
    (concat([a, b]) * np.array([1.0, 2.0, 3.0])).sum().backward()
    np.testing.assert_array_equal(a.grad, [[1.0], [1.0]])
    np.testing.assert_array_equal(b.grad, [[2.0, 3.0], [2.0, 3.0]])


def test_shared_subexpression_accumulates():
    x = Tensor(2.0, requires_grad=True)
    y = x * x
    (y + y * x).backward()  # d/dx (x^2 + x^3) = 2x + 3x^2
    assert x.grad == pytest.approx(4.0 + 12.0)


def test_no_grad_builds_no_graph():
    x = Tensor(2.0, requires_grad=True)
    with no_grad():
        y = x * 3.0
    y.backward()
    assert x.grad == 0.0


def test_repeated_backward_accumulates():
    x = Tensor(1.5, requires_grad=True)
    for _ in range(3):
        x.square().backward()
    assert x.grad == pytest.approx(9.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
def test_silu_tanh_chain_grad_property(values):
    x = np.array(values)
    check_unary(lambda t: (t.silu() * t.tanh()).exp(), x)

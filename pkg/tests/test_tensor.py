import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duse import tensor as T
from duse.errors import ContractError, DimensionError, NumericalError
from duse.tensor import Tensor, finite_difference_check, no_grad


# -- forward values ------------------------------------------------------------

def test_matmul_identity():
    out = Tensor(np.eye(2)) @ Tensor([[5.0], [7.0]])
    np.testing.assert_array_equal(out.data, [[5.0], [7.0]])


def test_matmul_hand_arithmetic():
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    assert "(2, 3)" in str(err.value)


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax(Tensor([1.0, 1.0, 1.0])).data, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(T.softmax(Tensor([0.0, math.log(2)])).data, [1 / 3, 2 / 3], atol=1e-15)
    out = T.softmax(Tensor([1000.0, 1000.0])).data
    assert np.isfinite(out).all()
    np.testing.assert_array_equal(out, [0.5, 0.5])


def test_softmax_rows_sum_to_one(rng):
    x = Tensor(rng.normal(0, 5, (20, 7, 9)))
    for axis in (0, 1, -1):
        s = T.softmax(x, axis=axis).data.sum(axis=axis)
        assert np.abs(s - 1).max() <= 1e-12


def test_layer_norm_examples():
    one, zero = Tensor(np.ones(2)), Tensor(np.zeros(2))
    np.testing.assert_array_equal(T.layer_norm(Tensor([4.0, 4.0]), one, zero).data, [0.0, 0.0])
    np.testing.assert_allclose(T.layer_norm(Tensor([1.0, 3.0]), one, zero, eps=1e-12).data,
                               [-1.0, 1.0], atol=1e-10)
    beta = Tensor([0.3, -2.0])
    np.testing.assert_array_equal(T.layer_norm(Tensor([1.0, 3.0]), Tensor(np.zeros(2)), beta).data,
                                  beta.data)


def test_small_ops():
    np.testing.assert_array_equal(T.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])
    np.testing.assert_allclose(T.l2_normalize(Tensor([3.0, 4.0])).data, [0.6, 0.8], atol=1e-15)
    row = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(Tensor(np.tile(row, (5, 1))).mean(axis=0).data, row)


def test_concat_mismatch():
    with pytest.raises(DimensionError):
        T.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))], axis=0)


def test_deterministic_outputs(rng):
    x = rng.normal(size=(4, 6))
    a = T.softmax(Tensor(x) @ Tensor(x.T)).data
    b = T.softmax(Tensor(x) @ Tensor(x.T)).data
    assert a.tobytes() == b.tobytes()


# -- backward ------------------------------------------------------------------

def test_product_rule():
    x, y = Tensor(2.0, requires_grad=True), Tensor(3.0, requires_grad=True)
    (x * y).backward()
    assert x.grad == 3.0 and y.grad == 2.0


def test_relu_dead_region():
    x = Tensor(-1.0, requires_grad=True)
    T.relu(x).backward()
    assert x.grad == 0.0


def test_fan_out_accumulates():
    x = Tensor(1.7, requires_grad=True)
    (x + x).backward()
    assert x.grad == 2.0


def test_cross_entropy_gradient_is_probs_minus_onehot(rng):
    z = Tensor(rng.normal(size=6), requires_grad=True)
    (-T.log_softmax(z)[2]).backward()
    p = np.exp(z.data - z.data.max())
    p /= p.sum()
    np.testing.assert_allclose(z.grad, p - np.eye(6)[2], atol=1e-14)
    assert finite_difference_check(lambda: -T.log_softmax(z)[2], [z]) < 1e-7


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2.0).backward()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad and y._parents == ()


def test_broadcast_gradient_is_unbroadcast(rng):
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    ((a + b) * (a * b)).sum().backward()
    assert b.grad.shape == (3,)
    assert finite_difference_check(lambda: ((a + b) * (a * b)).sum(), [a, b]) < 1e-7


# -- finite differences ----------------------------------------------------------

def test_fd_quadratic():
    x = Tensor(3.0, requires_grad=True)
    assert finite_difference_check(lambda: x * x, [x]) < 1e-7


def test_fd_plain_float64_quadratic():
    x = Tensor(3.0, requires_grad=True)
    assert finite_difference_check(lambda: x * x, [x], extended=False) < 1e-7


def test_fd_constant():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    assert finite_difference_check(lambda: (x * 0.0).sum() + 5.0, [x]) == 0.0


def test_fd_restores_parameters(rng):
    x = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    before = x.data.copy()
    finite_difference_check(lambda: (T.exp(x) * x).sum(), [x])
    assert x.data.dtype == np.float64
    assert x.data.tobytes() == before.tobytes()


@pytest.mark.filterwarnings("ignore:invalid value")
def test_fd_non_finite():
    x = Tensor(-1.0, requires_grad=True)
    with pytest.raises(NumericalError):
        finite_difference_check(lambda: T.log(x), [x])


UNARY = {
    "exp": lambda t: T.exp(t * 0.3),
    "tanhish": lambda t: T.quick_gelu(t),
    "relu_shift": lambda t: T.relu(t + 0.05),
    "softmax": lambda t: T.softmax(t, axis=-1),
    "log_softmax": lambda t: T.log_softmax(t, axis=0),
    "l2": lambda t: T.l2_normalize(t, axis=-1),
    "square": lambda t: t * t,
    "recip": lambda t: 1.0 / (t * t + 1.0),
}


@settings(max_examples=40, deadline=None)
@given(
    rows=st.integers(1, 4),
    cols=st.integers(1, 4),
    ops=st.lists(st.sampled_from(sorted(UNARY)), min_size=1, max_size=4),
    seed=st.integers(0, 10_000),
)
def test_random_graphs_match_finite_differences(rows, cols, ops, seed):
    r = np.random.default_rng(seed)
    x = Tensor(r.normal(size=(rows, cols)), requires_grad=True)
    w = Tensor(r.normal(size=(cols, cols)), requires_grad=True)
    g = Tensor(r.uniform(0.5, 1.5, cols), requires_grad=True)
    b = Tensor(r.normal(size=cols), requires_grad=True)
    probe = r.normal(size=(rows, cols))

    def f():
        h = T.layer_norm(x @ w, g, b)
        for name in ops:
            h = UNARY[name](h) + h
        return (h * Tensor(probe)).sum()

    assert finite_difference_check(f, [x, w, g, b]) < 1e-4

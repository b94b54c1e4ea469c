import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vslnet import numerics as nx
from vslnet.errors import ConfigError, DegenerateInputError, NumericalError, ShapeError, UsageError


def param(a, name=None):
    return nx.Tensor(np.asarray(a, dtype=float), requires_grad=True, name=name)


def fd_error(f, *params):
    return nx.finite_difference_check(f, list(params))


# -- matmul ------------------------------------------------------------------


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(nx.matmul(np.eye(2), a).data, a)


def test_matmul_hand_value():
    out = nx.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_grad_is_ones_times_bt():
    rng = np.random.default_rng(0)
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
    nx.matmul(a, b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    np.testing.assert_allclose(b.grad, a.data.T @ np.ones((3, 2)))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


# -- softmax -----------------------------------------------------------------


def test_softmax_examples():
    np.testing.assert_allclose(nx.softmax(np.zeros(3)).data, [1 / 3] * 3)
    np.testing.assert_allclose(nx.softmax(np.array([0.0, math.log(3)])).data, [0.25, 0.75])
    out = nx.softmax(np.array([5.0, 9.0]), mask=np.array([True, False])).data
    assert out[0] == 1.0 and out[1] == 0.0


def test_softmax_fully_masked_slice():
    with pytest.raises(DegenerateInputError):
        nx.softmax(np.zeros((2, 3)), mask=np.array([[True, False, False], [False] * 3]))


@settings(max_examples=150, deadline=None)
@given(
    hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 7)),
               elements=st.floats(-50, 50, allow_nan=False)),
    st.data(),
)
def test_softmax_normalizes(x, data):
    mask = data.draw(hnp.arrays(bool, x.shape))
    mask[:, 0] = True
    p = nx.softmax(x, axis=-1, mask=mask).data
    assert np.all(p >= 0)
    assert np.all(p[~mask] == 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)


# -- sigmoid -----------------------------------------------------------------


def test_sigmoid_examples():
    assert nx.sigmoid(np.array(0.0)).item() == 0.5
    assert nx.sigmoid(np.array(-30.0)).item() > 0
    x = param(0.0)
    nx.sigmoid(x).backward()
    assert x.grad == pytest.approx(0.25)


def test_sigmoid_extremes_finite():
    out = nx.sigmoid(np.array([-700.0, 700.0])).data
    assert np.all(np.isfinite(out))
    assert out[0] > 0


@settings(max_examples=150, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(-36, 36, allow_nan=False)))
def test_sigmoid_open_interval(x):
    s = nx.sigmoid(x).data
    assert np.all((s > 0) & (s < 1))


# -- layer norm --------------------------------------------------------------


def test_layer_norm_examples():
    one, zero = np.ones(2), np.zeros(2)
    np.testing.assert_allclose(nx.layer_norm(np.array([1.0, 1.0]), one, zero).data, [0.0, 0.0])
    np.testing.assert_allclose(nx.layer_norm(np.array([-1.0, 1.0]), one, zero).data, [-1, 1], atol=1e-5)
    bias = np.array([0.3, -0.7])
    np.testing.assert_array_equal(nx.layer_norm(np.array([4.0, 2.0]), zero, bias).data, bias)


# -- conv1d ------------------------------------------------------------------


def test_conv1d_identity_kernel():
    x = np.random.default_rng(1).normal(size=(1, 5, 3))
    out = nx.conv1d(x, np.eye(3)[None], np.zeros(3)).data
    np.testing.assert_allclose(out, x)


def test_conv1d_hand_value():
    x = np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1)
    out = nx.conv1d(x, np.ones((3, 1, 1)), np.zeros(1)).data
    np.testing.assert_array_equal(out.ravel(), [3.0, 6.0, 5.0])


def test_conv1d_even_kernel():
    with pytest.raises(ConfigError):
        nx.conv1d(np.ones((1, 4, 2)), np.ones((2, 2, 2)), np.zeros(2))


def test_conv1d_kernel_gradient():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 6, 3))
    k, b = param(rng.normal(size=(5, 3, 4))), param(rng.normal(size=4))

    def f():
        out = nx.conv1d(x, k, b)
        return (out * out).sum()

    assert fd_error(f, k, b) < 1e-5


# -- attention ---------------------------------------------------------------


def _mha_params(rng, d):
    p = {}
    for n in "qkvo":
        p["w" + n] = param(rng.normal(size=(d, d)) / np.sqrt(d))
        p["b" + n] = param(rng.normal(size=d) * 0.1)
    return p


def test_mha_single_position_is_linear():
    rng = np.random.default_rng(3)
    p = _mha_params(rng, 4)
    x = rng.normal(size=(1, 1, 4))
    out = nx.multi_head_attention(x, 2, p).data
    v = x @ p["wv"].data + p["bv"].data
    np.testing.assert_allclose(out, v @ p["wo"].data + p["bo"].data)


def test_mha_heads_must_divide():
    with pytest.raises(ConfigError):
        nx.multi_head_attention(np.ones((1, 2, 6)), 4, _mha_params(np.random.default_rng(0), 6))


def test_mha_padded_tail_permutation():
    rng = np.random.default_rng(4)
    p = _mha_params(rng, 6)
    x = rng.normal(size=(1, 5, 6))
    mask = np.array([[True, True, True, False, False]])
    base = nx.multi_head_attention(x, 3, p, mask).data
    y = x.copy()
    y[0, 3:] = y[0, [4, 3]] * 7.0
    np.testing.assert_allclose(nx.multi_head_attention(y, 3, p, mask).data[0, :3], base[0, :3])
    assert np.all(base[0, 3:] == 0)


# -- losses ------------------------------------------------------------------


def test_cross_entropy_examples():
    assert nx.cross_entropy(np.array([0.0, 1.0, 0.0]), 1).item() == 0.0
    assert nx.cross_entropy(np.full(4, 0.25), 3).item() == pytest.approx(math.log(4))
    assert nx.cross_entropy(np.array([1.0, 0.0]), 1).item() == pytest.approx(-math.log(1e-12))


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError):
        nx.cross_entropy(np.full(3, 1 / 3), 3)


def test_bce_examples():
    assert nx.binary_cross_entropy(np.array([1.0, 0.0]), np.array([1.0, 0.0])).item() < 1e-11
    loss = nx.binary_cross_entropy(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
    assert loss.item() == pytest.approx(math.log(2))


def test_bce_shape_mismatch():
    with pytest.raises(ShapeError):
        nx.binary_cross_entropy(np.array([0.5, 0.5]), np.array([1.0, 0.0, 1.0]))


def test_bce_gradient():
    s = param([0.2, 0.7, 0.45])
    y = np.array([0.0, 1.0, 1.0])
    assert fd_error(lambda: nx.binary_cross_entropy(s, y), s) < 1e-7


# -- backward ----------------------------------------------------------------


def test_backward_examples():
    x = param([1.0, 2.0])
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0])
    x.zero_grad()
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_accumulates_until_zeroed():
    x = param([1.0, 2.0])
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])


def test_backward_non_scalar():
    with pytest.raises(UsageError):
        (param([1.0, 2.0]) * 2.0).backward()


def test_unconnected_parameter_gets_exact_zero():
    x, unused = param([1.0, 2.0]), param([3.0])
    loss = (x * x).sum()
    loss.backward()
    assert np.all(unused.grad == 0.0)


def test_non_finite_result_raises():
    with pytest.raises(NumericalError), np.errstate(invalid="ignore"):
        nx.log(np.array([-1.0]))


def test_no_grad_records_nothing():
    x = param([1.0])
    with nx.no_grad():
        y = x * 3.0
        assert not nx.grad_enabled()
    assert y._backward is None
    assert nx.grad_enabled()


# -- finite differences ------------------------------------------------------


def test_fd_examples():
    x = param(1.0)
    assert nx.finite_difference_check(lambda: x * x, [x]) < 1e-8
    c = param([0.5, -0.5])
    assert nx.finite_difference_check(lambda: nx.Tensor(3.0) + c.sum() * 0.0, [c]) == 0.0


def test_relative_error_floor():
    assert nx.relative_error(1e-12, 0.0) == pytest.approx(1e-4)


# domains keep each op away from kinks and overflow
UNARY = {
    "relu": (nx.relu, 0.1, 2.0),
    "tanh": (nx.tanh, -2.0, 2.0),
    "sigmoid": (nx.sigmoid, -4.0, 4.0),
    "exp": (nx.exp, -2.0, 2.0),
    "log": (nx.log, 0.2, 3.0),
}


@settings(max_examples=120, deadline=None)
@given(
    st.sampled_from(sorted(UNARY)),
    st.integers(1, 4),
    st.integers(1, 4),
    st.integers(0, 2**31 - 1),
)
def test_elementwise_gradients(name, r, c, seed):
    op, lo, hi = UNARY[name]
    rng = np.random.default_rng(seed)
    x = param(rng.uniform(lo, hi, size=(r, c)))
    w = rng.normal(size=(r, c))
    assert fd_error(lambda: (op(x) * w).sum(), x) < 1e-4


@settings(max_examples=120, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_structural_gradients(b, n, d, seed):
    rng = np.random.default_rng(seed)
    x = param(rng.normal(size=(b, n, d)))
    y = param(rng.normal(size=(b, d, n)))
    g, beta = param(rng.normal(size=d)), param(rng.normal(size=d))
    mask = rng.random((b, n)) < 0.7
    mask[:, 0] = True
    w = rng.normal(size=(b, n, n))

    def f():
        z = nx.layer_norm(x, g, beta)
        att = nx.softmax(nx.matmul(z, y), axis=-1, mask=mask[:, None, :])
        pooled = nx.masked_max(x, axis=-2, mask=mask[..., None])
        cat = nx.concat([att, nx.broadcast_to(pooled.reshape(b, 1, d), (b, n, d))], axis=-1)
        return (nx.mul(att, w)).sum() + (cat * cat).mean() + nx.reverse_padded(x, mask.sum(1)).sum() * 0.3

    assert fd_error(f, x, y, g, beta) < 1e-4


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 2), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_lstm_and_attention_gradients(b, n, d_in, h, seed):
    rng = np.random.default_rng(seed)
    x = param(rng.normal(size=(b, n, d_in)))
    w = param(rng.normal(size=(d_in, 4 * h)) * 0.5)
    u = param(rng.normal(size=(h, 4 * h)) * 0.5)
    bias = param(rng.normal(size=4 * h) * 0.1)
    coef = rng.normal(size=(b, n, h))
    mp = _mha_params(rng, 2 * h)
    xa = param(rng.normal(size=(b, n, 2 * h)))

    def f():
        return (nx.lstm(x, w, u, bias) * coef).sum() + nx.multi_head_attention(xa, 2, mp).sum()

    assert fd_error(f, x, w, u, bias, xa, *mp.values()) < 1e-4


def test_dropout_scaling_and_eval_identity():
    x = np.ones((200, 50))
    out = nx.dropout(x, 0.2, np.random.default_rng(0), training=True).data
    assert set(np.unique(out)) <= {0.0, 1.25}
    np.testing.assert_array_equal(nx.dropout(x, 0.2, None, training=False).data, x)


def test_reverse_padded_is_involution():
    x = np.arange(12.0).reshape(2, 3, 2)
    lengths = np.array([3, 2])
    r = nx.reverse_padded(x, lengths).data
    np.testing.assert_array_equal(r[1, :2], x[1, [1, 0]])
    np.testing.assert_array_equal(nx.reverse_padded(r, lengths).data, x)

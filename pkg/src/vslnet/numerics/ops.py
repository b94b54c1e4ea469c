"""Differentiable tensor primitives."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, ShapeError
from .tensor import Tensor, as_tensor, make_result, unbroadcast

MASK_VALUE = -1e30


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None
    return make_result(
        out, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)), "add"
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None
    return make_result(
        out, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)), "sub"
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(str(e)) from None

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_result(out, (a, b), backward, "mul")


def matmul(a, b):
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_result(out, (a, b), backward, "matmul")


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(out, (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(x, axis, keepdims), 1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def swapaxes(x, a, b):
    x = as_tensor(x)
    out = np.swapaxes(x.data, a, b)
    return make_result(out, (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def getitem(x, index):
    x = as_tensor(x)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return make_result(out, (x,), backward, "getitem")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(str(e)) from None
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(out, tensors, backward, "concat")


def broadcast_to(x, shape):
    x = as_tensor(x)
    out = np.broadcast_to(x.data, shape).copy()
    return make_result(out, (x,), lambda g: (unbroadcast(g, x.shape),), "broadcast_to")


def relu(x):
    x = as_tensor(x)
    on = x.data > 0
    return make_result(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x):
    """Logistic function, evaluated without overflow for large |x|."""
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return make_result(y, (x,), lambda g: (g * y,), "exp")


def log(x):
    x = as_tensor(x)
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis``; entries where ``mask`` is false get probability 0.

    Masked logits are replaced by ``MASK_VALUE`` before normalization, so they
    underflow to an exact zero.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not np.all(mask.any(axis=axis)):
            raise DegenerateInputError("softmax slice has no unmasked entries")
        z = np.where(mask, z, MASK_VALUE)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), backward, "softmax")


def masked_fill(x, mask, value=MASK_VALUE):
    """Replace entries where ``mask`` is false by a constant."""
    x = as_tensor(x)
    keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = np.where(keep, x.data, value)
    return make_result(out, (x,), lambda g: (np.where(keep, g, 0.0),), "masked_fill")


def masked_max(x, axis, mask=None):
    """Maximum along ``axis`` over unmasked entries; gradient goes to the first argmax."""
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not np.all(mask.any(axis=axis)):
            raise DegenerateInputError("max slice has no unmasked entries")
        z = np.where(mask, z, -np.inf)
    idx = np.expand_dims(z.argmax(axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return make_result(out, (x,), backward, "masked_max")


def dropout(x, rate, rng, training=True):
    if not training or rate <= 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return mul(x, keep / (1.0 - rate))


def reverse_padded(x, lengths):
    """Reverse each sequence along axis 1 within its true length; padding stays put.

    ``x`` has shape [batch, time, ...]. The permutation is an involution, so the
    backward pass applies the same gather to the incoming gradient.
    """
    x = as_tensor(x)
    b, n = x.shape[:2]
    idx = np.tile(np.arange(n), (b, 1))
    for i, length in enumerate(lengths):
        idx[i, :length] = np.arange(length)[::-1]
    rows = np.arange(b)[:, None]
    out = x.data[rows, idx]
    return make_result(out, (x,), lambda g: (g[rows, idx],), "reverse_padded")

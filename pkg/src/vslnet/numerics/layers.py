"""Fused layer primitives with hand-written backward passes."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from . import ops
from .ops import _sigmoid
from .tensor import as_tensor, make_result


def linear(x, w, b=None):
    y = ops.matmul(x, w)
    return y if b is None else ops.add(y, b)


def layer_norm(x, gain, bias, eps=1e-6):
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm expects gain/bias of shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgain, dbias

    return make_result(out, (x, gain, bias), backward, "layer_norm")


def conv1d(x, kernels, bias):
    """Same-length 1-D convolution over axis -2.

    ``x`` is [..., n, d_in]; ``kernels`` is [k, d_in, d_out] with odd k; the
    sequence is zero padded by (k-1)/2 on both ends.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    k, d_in, d_out = kernels.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel size must be odd, got {k}")
    if x.shape[-1] != d_in or bias.shape != (d_out,):
        raise ShapeError(f"conv1d shapes: x {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    n = x.shape[-2]
    pad = (k - 1) // 2
    xp = np.zeros(x.shape[:-2] + (n + 2 * pad, d_in), dtype=x.data.dtype)
    xp[..., pad : pad + n, :] = x.data
    # cols[..., t, j, c] = xp[..., t + j, c]
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-2).swapaxes(-1, -2)
    cols = cols.reshape(*x.shape[:-1], k * d_in)
    kr = kernels.data.reshape(k * d_in, d_out)
    out = cols @ kr + bias.data

    def backward(g):
        g2 = g.reshape(-1, d_out)
        dk = (cols.reshape(-1, k * d_in).T @ g2).reshape(k, d_in, d_out)
        db = g2.sum(axis=0)
        dcols = (g @ kr.T).reshape(*x.shape[:-1], k, d_in)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[..., j : j + n, :] += dcols[..., j, :]
        return dxp[..., pad : pad + n, :], dk, db

    return make_result(out, (x, kernels, bias), backward, "conv1d")


def multi_head_attention(x, heads, params, mask=None):
    """Scaled dot-product self-attention over axis -2 with ``heads`` heads.

    ``params`` holds wq, bq, wk, bk, wv, bv, wo, bo. Masked positions are
    excluded as keys and their output rows are zeroed.
    """
    x = as_tensor(x)
    *lead, n, d = x.shape
    if d % heads:
        raise ConfigError(f"model width {d} is not divisible by {heads} heads")
    dh = d // heads

    def split(t):
        return t.reshape(*lead, n, heads, dh).swapaxes(-2, -3)

    q = split(linear(x, params["wq"], params["bq"]))
    k = split(linear(x, params["wk"], params["bk"]))
    v = split(linear(x, params["wv"], params["bv"]))
    scores = ops.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    key_mask = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        key_mask = mask[..., None, None, :]
    weights = ops.softmax(scores, axis=-1, mask=key_mask)
    ctx = ops.matmul(weights, v).swapaxes(-2, -3).reshape(*lead, n, d)
    out = linear(ctx, params["wo"], params["bo"])
    if mask is not None:
        out = ops.mul(out, mask[..., None].astype(np.float64))
    return out


def lstm(x, w, u, b):
    """Unidirectional LSTM over axis 1 of ``x`` [batch, time, d_in], zero initial states.

    Gate layout along the 4h axis is (input, forget, cell, output). Returns
    hidden states [batch, time, h].
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"lstm expects [batch, time, features], got {x.shape}")
    xw = linear(x, w, b)
    return _lstm_scan(xw, as_tensor(u))


def _lstm_scan(xw, u):
    bsz, n, four_h = xw.shape
    h_dim = four_h // 4
    if u.shape != (h_dim, four_h):
        raise ShapeError(f"recurrent weight shape {u.shape} != {(h_dim, four_h)}")
    dt = np.result_type(xw.data, u.data)
    hs = np.zeros((bsz, n + 1, h_dim), dtype=dt)
    cs = np.zeros((bsz, n + 1, h_dim), dtype=dt)
    gates = np.empty((bsz, n, four_h), dtype=dt)
    tanh_c = np.empty((bsz, n, h_dim), dtype=dt)
    for t in range(n):
        z = xw.data[:, t] + hs[:, t] @ u.data
        i = _sigmoid(z[:, :h_dim])
        f = _sigmoid(z[:, h_dim : 2 * h_dim])
        gg = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(z[:, 3 * h_dim :])
        cs[:, t + 1] = f * cs[:, t] + i * gg
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = o * tanh_c[:, t]
        gates[:, t] = np.concatenate([i, f, gg, o], axis=1)
    out = hs[:, 1:].copy()

    def backward(g):
        dxw = np.zeros_like(xw.data)
        du = np.zeros_like(u.data)
        dh_next = np.zeros((bsz, h_dim), dtype=dt)
        dc_next = np.zeros((bsz, h_dim), dtype=dt)
        for t in range(n - 1, -1, -1):
            i = gates[:, t, :h_dim]
            f = gates[:, t, h_dim : 2 * h_dim]
            gg = gates[:, t, 2 * h_dim : 3 * h_dim]
            o = gates[:, t, 3 * h_dim :]
            dh = g[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tanh_c[:, t] ** 2)
            dz = np.concatenate(
                [
                    dc * gg * i * (1.0 - i),
                    dc * cs[:, t] * f * (1.0 - f),
                    dc * i * (1.0 - gg**2),
                    dh * tanh_c[:, t] * o * (1.0 - o),
                ],
                axis=1,
            )
            dxw[:, t] = dz
            du += hs[:, t].T @ dz
            dh_next = dz @ u.data.T
            dc_next = dc * f
        return dxw, du

    return make_result(out, (xw, u), backward, "lstm")

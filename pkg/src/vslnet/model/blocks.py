"""Network blocks as functions of (inputs, masks, parameter dict).

All tensors are batched: features [b, n, d], masks [b, n] boolean. A block's
``params`` argument is the parameter sub-dict for that block with the block
prefix stripped (see ``VSLModel.group``).
"""
from __future__ import annotations

import numpy as np

from .. import numerics as nx


def _fmask(mask):
    return np.asarray(mask, dtype=np.float64)[..., None]


def subgroup(params, prefix):
    """Parameters under ``prefix`` with the prefix removed."""
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def positional_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    rates = 1.0 / np.power(10000.0, (2 * (np.arange(dim) // 2)) / dim)
    ang = pos * rates[None, :]
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(ang[:, 0::2])
    pe[:, 1::2] = np.cos(ang[:, 1::2])
    return pe


def project_inputs(v, q, params):
    """Two independent affine maps into the shared hidden width."""
    return (
        nx.linear(v, params["proj_v.w"], params["proj_v.b"]),
        nx.linear(q, params["proj_q.w"], params["proj_q.b"]),
    )


def feature_encoder(x, mask, params, cfg, rng=None, training=False):
    """Positional encoding, conv stack, self-attention and feed-forward, each pre-normed and residual."""
    ell, d = x.shape[-2], x.shape[-1]
    m = _fmask(mask)
    # the encoding is shrunk by sqrt(d) so it does not swamp the projected content
    x = nx.mul(nx.add(x, positional_encoding(ell, d) / np.sqrt(d)), m)
    rate = cfg.dropout
    for i in range(cfg.conv_layers):
        p = f"conv{i}."
        y = nx.layer_norm(x, params[p + "ln.g"], params[p + "ln.b"])
        y = nx.relu(nx.conv1d(nx.mul(y, m), params[p + "k"], params[p + "b"]))
        x = nx.mul(nx.add(x, nx.dropout(y, rate, rng, training)), m)
    y = nx.layer_norm(x, params["attn_ln.g"], params["attn_ln.b"])
    y = nx.multi_head_attention(y, cfg.heads, subgroup(params, "attn."), mask)
    x = nx.add(x, nx.dropout(y, rate, rng, training))
    y = nx.layer_norm(x, params["ffn_ln.g"], params["ffn_ln.b"])
    y = nx.relu(nx.linear(y, params["ffn.w"], params["ffn.b"]))
    x = nx.add(x, nx.dropout(y, rate, rng, training))
    return nx.mul(x, m)


def recurrent_encoder(x, mask, params):
    """Bidirectional LSTM, d/2 per direction; the backward pass reverses each sequence within its length."""
    m = _fmask(mask)
    lengths = np.asarray(mask, dtype=bool).sum(axis=1)
    x = nx.mul(x, m)
    fwd = nx.lstm(x, params["fwd.w"], params["fwd.u"], params["fwd.b"])
    rev = nx.reverse_padded(x, lengths)
    bwd = nx.reverse_padded(nx.lstm(rev, params["bwd.w"], params["bwd.u"], params["bwd.b"]), lengths)
    return nx.mul(nx.concat([fwd, bwd], axis=-1), m)


def similarity(v, q, params):
    """Trilinear score w_v.v_i + w_q.q_j + w_m.(v_i * q_j), shape [b, n, m]."""
    sv = nx.matmul(v, params["w_v"]).reshape(*v.shape[:-1], 1)
    sq = nx.matmul(q, params["w_q"]).reshape(*q.shape[:-2], 1, q.shape[-2])
    sm = nx.matmul(nx.mul(v, params["w_m"]), q.swapaxes(-1, -2))
    return nx.add(nx.add(sm, sv), sq)


def context_query_attention(v, q, v_mask, q_mask, params, cfg, rng=None, training=False):
    """Returns (query-aware features [b, n, d], similarity S [b, n, m])."""
    s = similarity(v, q, params)
    vm = np.asarray(v_mask, dtype=bool)
    qm = np.asarray(q_mask, dtype=bool)
    s_r = nx.softmax(s, axis=-1, mask=qm[:, None, :])
    s_c = nx.softmax(s, axis=-2, mask=vm[:, :, None])
    a = nx.matmul(s_r, q)
    b = nx.matmul(nx.matmul(s_r, s_c.swapaxes(-1, -2)), v)
    fused = nx.concat([v, a, nx.mul(v, a), nx.mul(v, b)], axis=-1)
    out = nx.linear(fused, params["ffn.w"], params["ffn.b"])
    out = nx.dropout(out, cfg.dropout, rng, training)
    return nx.mul(out, _fmask(v_mask)), s


def cat_attention(v, q, q_mask):
    """Each visual feature concatenated with the max-pooled query feature, [b, n, 2d]."""
    qm = np.asarray(q_mask, dtype=bool)[..., None]
    pooled = nx.masked_max(q, axis=-2, mask=qm)
    n = v.shape[-2]
    tiled = nx.broadcast_to(pooled.reshape(pooled.shape[0], 1, pooled.shape[-1]), (pooled.shape[0], n, pooled.shape[-1]))
    return nx.concat([v, tiled], axis=-1)


def sentence_representation(q, q_mask, params, return_weights=False):
    """Additive self-attention pooling of query features into one vector per sample."""
    hidden = nx.tanh(nx.linear(q, params["w"], params["b"]))
    scores = nx.matmul(hidden, params["v"]).reshape(*q.shape[:-1])
    weights = nx.softmax(scores, axis=-1, mask=np.asarray(q_mask, dtype=bool))
    h = nx.matmul(weights.reshape(weights.shape[0], 1, weights.shape[1]), q)
    h = h.reshape(h.shape[0], h.shape[-1])
    return (h, weights) if return_weights else h


def query_guided_highlighting(vq, h_q, v_mask, params):
    """Returns (scores S_h [b, n], highlighted features [b, n, 2d])."""
    bsz, n, d = vq.shape
    m = _fmask(v_mask)
    tiled = nx.broadcast_to(h_q.reshape(bsz, 1, d), (bsz, n, d))
    vbar = nx.mul(nx.concat([vq, tiled], axis=-1), m)
    logits = nx.conv1d(vbar, params["conv.k"], params["conv.b"]).reshape(bsz, n)
    s_h = nx.sigmoid(logits)
    return s_h, nx.mul(vbar, s_h.reshape(bsz, n, 1))


def conditioned_span_predictor(x, mask, params):
    """Start LSTM over x, end LSTM over the start hidden states; masked logits set to -1e30."""
    bsz, n, _ = x.shape
    h_s = nx.lstm(x, params["start.w"], params["start.u"], params["start.b"])
    h_e = nx.lstm(h_s, params["end.w"], params["end.u"], params["end.b"])
    logit_s = nx.linear(nx.concat([h_s, x], axis=-1), params["start_head.w"], params["start_head.b"])
    logit_e = nx.linear(nx.concat([h_e, x], axis=-1), params["end_head.w"], params["end_head.b"])
    keep = np.asarray(mask, dtype=bool)
    return (
        nx.masked_fill(logit_s.reshape(bsz, n), keep),
        nx.masked_fill(logit_e.reshape(bsz, n), keep),
    )

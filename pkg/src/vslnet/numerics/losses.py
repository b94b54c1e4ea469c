from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import as_tensor, make_result

PROB_FLOOR = 1e-12


def cross_entropy(p, label):
    """Mean of -log p[label] over the leading axes of ``p`` [..., n].

    ``label`` is an int (for 1-D ``p``) or an int array of shape ``p.shape[:-1]``.
    Probabilities are clamped to ``PROB_FLOOR`` so the loss stays finite.
    """
    p = as_tensor(p)
    label = np.asarray(label, dtype=np.int64)
    n = p.shape[-1]
    if label.shape != p.shape[:-1]:
        raise ShapeError(f"labels {label.shape} do not match probabilities {p.shape}")
    if np.any(label < 0) or np.any(label >= n):
        raise IndexError(f"label out of range [0, {n})")
    picked = np.take_along_axis(p.data, label[..., None], axis=-1)[..., 0]
    clamped = np.maximum(picked, PROB_FLOOR)
    count = max(picked.size, 1)
    loss = -np.log(clamped).sum() / count

    def backward(g):
        full = np.zeros_like(p.data)
        local = np.where(picked > PROB_FLOOR, -1.0 / clamped, 0.0) * (g / count)
        np.put_along_axis(full, label[..., None], local[..., None], axis=-1)
        return (full,)

    return make_result(loss, (p,), backward, "cross_entropy")


def binary_cross_entropy(s, y, mask=None):
    """Per-position BCE, averaged over real positions of each row, then over rows."""
    s = as_tensor(s)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != s.shape:
        raise ShapeError(f"targets {y.shape} do not match scores {s.shape}")
    m = np.ones_like(y) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.shape != s.shape:
        raise ShapeError(f"mask {m.shape} does not match scores {s.shape}")
    sc = np.clip(s.data, PROB_FLOOR, 1.0 - PROB_FLOOR)
    per = -(y * np.log(sc) + (1.0 - y) * np.log(1.0 - sc))
    denom = m.sum(axis=-1, keepdims=True)
    rows = max(int(np.prod(s.shape[:-1])), 1)
    weight = m / denom / rows
    loss = (per * weight).sum()
    inside = (s.data > PROB_FLOOR) & (s.data < 1.0 - PROB_FLOOR)

    def backward(g):
        d = (-y / sc + (1.0 - y) / (1.0 - sc)) * weight * inside
        return (d * g,)

    return make_result(loss, (s,), backward, "binary_cross_entropy")

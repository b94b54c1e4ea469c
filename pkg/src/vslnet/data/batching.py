from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    features: np.ndarray         # [b, n_max, d_v]
    feature_mask: np.ndarray     # [b, n_max] bool
    token_ids: np.ndarray        # [b, m_max] int, PAD = 0
    token_mask: np.ndarray       # [b, m_max] bool
    starts: np.ndarray           # [b]
    ends: np.ndarray             # [b]
    highlight: np.ndarray | None  # [b, n_max] 0/1, zero on padding
    samples: tuple

    @property
    def size(self):
        return self.features.shape[0]

    @property
    def lengths(self):
        return self.feature_mask.sum(axis=1)


def collate(samples, alpha=None) -> Batch:
    from ..model.highlight import highlight_labels

    b = len(samples)
    n_max = max(s.length for s in samples)
    m_max = max(len(s.token_ids) for s in samples)
    d_v = samples[0].features.shape[1]
    feats = np.zeros((b, n_max, d_v))
    fmask = np.zeros((b, n_max), dtype=bool)
    toks = np.zeros((b, m_max), dtype=np.int64)
    tmask = np.zeros((b, m_max), dtype=bool)
    hl = None if alpha is None else np.zeros((b, n_max))
    for i, s in enumerate(samples):
        n, m = s.length, len(s.token_ids)
        feats[i, :n] = s.features
        fmask[i, :n] = True
        toks[i, :m] = s.token_ids
        tmask[i, :m] = True
        if hl is not None:
            hl[i, :n] = highlight_labels(s.span, n, alpha)
    starts = np.array([s.span.start for s in samples], dtype=np.int64)
    ends = np.array([s.span.end for s in samples], dtype=np.int64)
    return Batch(feats, fmask, toks, tmask, starts, ends, hl, tuple(samples))


def make_batches(dataset, batch_size: int = 16, seed=None, alpha=None):
    """Yield padded batches; ``seed`` (if given) fixes the shuffle order."""
    samples = list(dataset)
    order = np.arange(len(samples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        yield collate([samples[i] for i in order[start : start + batch_size]], alpha)

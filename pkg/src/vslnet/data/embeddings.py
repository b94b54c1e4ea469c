"""Frozen word-embedding tables in GloVe text format."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParseError

PAD = "<pad>"
UNK = "<unk>"
UNK_SCALE = 0.01


@dataclass(frozen=True)
class EmbeddingTable:
    """Row 0 is PAD (zeros), row 1 is UNK. Never trained."""

    index: dict
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def lookup(self, tokens) -> np.ndarray:
        unk = self.index[UNK]
        return np.array([self.index.get(t.lower(), unk) for t in tokens], dtype=np.int64)


def _unk_vector(dim, seed):
    return np.random.default_rng(seed).normal(0.0, UNK_SCALE, size=dim)


def build_table(vocabulary, vectors_by_token: dict, dim: int, seed: int = 0) -> EmbeddingTable:
    """Tokens of ``vocabulary`` missing from ``vectors_by_token`` resolve to UNK."""
    index = {PAD: 0, UNK: 1}
    rows = [np.zeros(dim), _unk_vector(dim, seed)]
    for tok in vocabulary:
        tok = tok.lower()
        if tok in index or tok not in vectors_by_token:
            continue
        index[tok] = len(rows)
        rows.append(np.asarray(vectors_by_token[tok], dtype=np.float64))
    return EmbeddingTable(index, np.vstack(rows))


def read_glove(path, wanted=None) -> tuple[dict, int]:
    vectors, dim = {}, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            tok, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
            if len(vals) != dim or dim == 0:
                raise ParseError(f"{path}:{lineno}: expected {dim} values, found {len(vals)}")
            if wanted is not None and tok.lower() not in wanted:
                continue
            try:
                vectors[tok.lower()] = np.array([float(v) for v in vals])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
    if dim is None:
        raise ParseError(f"{path}: no embedding lines")
    return vectors, dim


def load_embeddings(path, vocabulary, seed: int = 0) -> EmbeddingTable:
    vocabulary = [t.lower() for t in vocabulary]
    vectors, dim = read_glove(path, set(vocabulary))
    return build_table(vocabulary, vectors, dim, seed)


def write_glove(path, tokens, vectors) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok, vec in zip(tokens, vectors):
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")

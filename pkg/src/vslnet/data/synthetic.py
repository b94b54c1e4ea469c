"""Synthetic localization data with a planted, recoverable answer span.

Every vocabulary token owns a fixed random unit vector in feature space. A
query's signature is the L2-normalized sum of its tokens' vectors. Feature
rows inside the planted span are signature + N(0, noise^2); rows outside are
pure noise. Annotation times come from ``span_to_time`` so ``time_to_span``
recovers the planted indices exactly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import SPLITS, build_samples, Dataset
from .embeddings import EmbeddingTable, build_table, write_glove
from .formats import write_annotations, write_features
from .spans import FeatureSequence, MomentAnnotation, SpanLabel, span_to_time


@dataclass
class SyntheticConfig:
    num_videos: int = 300
    n_range: tuple = (32, 64)
    feature_dim: int = 64
    embedding_dim: int = 300
    vocab_size: int = 100
    query_len: tuple = (3, 8)
    span_frac: tuple = (0.1, 0.5)
    duration_range: tuple = (20.0, 60.0)
    noise: float = 0.1
    seed: int = 7
    split_fractions: tuple = (0.7, 0.15, 0.15)
    split_counts: tuple | None = None

    def __post_init__(self):
        for name in ("n_range", "query_len", "span_frac", "duration_range", "split_fractions"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.split_counts is not None:
            self.split_counts = tuple(int(c) for c in self.split_counts)

    def split_sizes(self):
        if self.split_counts is not None:
            if sum(self.split_counts) != self.num_videos:
                raise ValueError("split_counts must add up to num_videos")
            return self.split_counts
        n_train = int(round(self.split_fractions[0] * self.num_videos))
        n_val = int(round(self.split_fractions[1] * self.num_videos))
        return n_train, n_val, self.num_videos - n_train - n_val


@dataclass
class SyntheticData:
    config: SyntheticConfig
    annotations: list
    features: dict
    table: EmbeddingTable
    planted: list = field(default_factory=list)
    token_vectors: np.ndarray | None = None

    def tokens(self):
        return [f"w{i:03d}" for i in range(self.config.vocab_size)]

    def splits(self) -> dict:
        sizes = self.config.split_sizes()
        out, start = {}, 0
        for name, size in zip(SPLITS, sizes):
            out[name] = self.annotations[start : start + size]
            start += size
        return out

    def datasets(self, n_max: int = 128) -> dict:
        return {
            name: Dataset(build_samples(anns, self.features, self.table, n_max), self.table)
            for name, anns in self.splits().items()
        }


def query_signature(token_ids, token_vectors) -> np.ndarray:
    v = token_vectors[np.asarray(token_ids)].sum(axis=0)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def generate_synthetic_dataset(cfg: SyntheticConfig) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed)
    d_v, vocab = cfg.feature_dim, cfg.vocab_size
    token_vectors = rng.normal(size=(vocab, d_v))
    token_vectors /= np.linalg.norm(token_vectors, axis=1, keepdims=True)
    word_vectors = rng.normal(0.0, 0.4, size=(vocab, cfg.embedding_dim))
    tokens = [f"w{i:03d}" for i in range(vocab)]

    annotations, features, planted = [], {}, []
    for vid in range(cfg.num_videos):
        video_id = f"v{vid:05d}"
        n = int(rng.integers(cfg.n_range[0], cfg.n_range[1] + 1))
        k = int(rng.integers(cfg.query_len[0], cfg.query_len[1] + 1))
        query = rng.integers(0, vocab, size=k)
        lo = max(1, int(round(cfg.span_frac[0] * n)))
        hi = max(lo, int(round(cfg.span_frac[1] * n)))
        length = int(rng.integers(lo, hi + 1))
        a_s = int(rng.integers(0, n - length + 1))
        a_e = a_s + length - 1
        feats = cfg.noise * rng.normal(size=(n, d_v))
        feats[a_s : a_e + 1] += query_signature(query, token_vectors)
        # stored as float32 on disk; keep memory identical to a reload
        feats = feats.astype(np.float32).astype(np.float64)
        duration = float(rng.uniform(*cfg.duration_range))
        start, end = span_to_time(a_s, a_e, n, duration)
        annotations.append(
            MomentAnnotation(video_id, duration, start, end, tuple(tokens[q] for q in query))
        )
        features[video_id] = FeatureSequence(video_id, feats)
        planted.append(SpanLabel(a_s, a_e))

    table = build_table(tokens, dict(zip(tokens, word_vectors)), cfg.embedding_dim, seed=cfg.seed)
    return SyntheticData(cfg, annotations, features, table, planted, token_vectors)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_synthetic_dataset(data: SyntheticData, out_dir) -> dict:
    """Write splits, VSLF features, GloVe embeddings and a manifest; returns the manifest."""
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    files = {}
    for name, anns in data.splits().items():
        write_annotations(out_dir / f"{name}.jsonl", anns)
        files[f"{name}.jsonl"] = _sha256(out_dir / f"{name}.jsonl")
    for vid, seq in data.features.items():
        path = out_dir / "features" / f"{vid}.vslf"
        write_features(path, seq.features)
        files[f"features/{vid}.vslf"] = _sha256(path)
    rows = [data.table.index[t] for t in data.tokens()]
    write_glove(out_dir / "embeddings.txt", data.tokens(), data.table.vectors[rows])
    files["embeddings.txt"] = _sha256(out_dir / "embeddings.txt")
    manifest = {
        "generator": "synthetic",
        "seed": data.config.seed,
        "config": asdict(data.config),
        "split_sizes": list(data.config.split_sizes()),
        "embeddings": "embeddings.txt",
        "files": dict(sorted(files.items())),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, load_embeddings
from .formats import read_annotations, read_features
from .spans import FeatureSequence, MomentAnnotation, SpanLabel, downsample_features, time_to_span

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Sample:
    annotation: MomentAnnotation
    features: np.ndarray
    token_ids: np.ndarray
    span: SpanLabel

    @property
    def video_id(self):
        return self.annotation.video_id

    @property
    def length(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    table: EmbeddingTable

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def feature_dim(self):
        return self.samples[0].features.shape[1]

    def subset(self, indices):
        return Dataset(tuple(self.samples[i] for i in indices), self.table)


def build_samples(annotations, features: dict, table: EmbeddingTable, n_max: int = 128) -> tuple:
    """Pair annotations with (downsampled) features and compute span labels on the final length."""
    cache = {}
    out = []
    for ann in annotations:
        if ann.video_id not in cache:
            seq = features[ann.video_id]
            if not isinstance(seq, FeatureSequence):
                seq = FeatureSequence(ann.video_id, np.asarray(seq, dtype=np.float64))
            cache[ann.video_id] = downsample_features(seq, n_max).features
        feats = cache[ann.video_id]
        span = time_to_span(ann.start, ann.end, ann.duration, feats.shape[0])
        out.append(Sample(ann, feats, table.lookup(ann.query), span))
    return tuple(out)


def load_split(data_dir, split: str, table: EmbeddingTable, n_max: int = 128) -> Dataset:
    data_dir = Path(data_dir)
    anns = read_annotations(data_dir / f"{split}.jsonl")
    feats = {}
    for ann in anns:
        if ann.video_id not in feats:
            feats[ann.video_id] = read_features(data_dir / "features" / f"{ann.video_id}.vslf")
    return Dataset(build_samples(anns, feats, table, n_max), table)


def load_table(data_dir, seed: int = 0) -> EmbeddingTable:
    """Embedding table over the vocabulary of every split found in ``data_dir``."""
    data_dir = Path(data_dir)
    vocab = []
    seen = set()
    for split in SPLITS:
        path = data_dir / f"{split}.jsonl"
        if not path.exists():
            continue
        for ann in read_annotations(path):
            for tok in ann.query:
                if tok not in seen:
                    seen.add(tok)
                    vocab.append(tok)
    manifest = data_dir / "manifest.json"
    emb_name = "embeddings.txt"
    if manifest.exists():
        emb_name = json.loads(manifest.read_text()).get("embeddings", emb_name)
    return load_embeddings(data_dir / emb_name, vocab, seed)


def load_dataset_dir(data_dir, n_max: int = 128, seed: int = 0, splits=SPLITS) -> dict:
    table = load_table(data_dir, seed)
    return {s: load_split(data_dir, s, table, n_max) for s in splits}

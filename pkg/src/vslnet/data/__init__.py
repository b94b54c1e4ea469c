from .batching import Batch, collate, make_batches
from .dataset import SPLITS, Dataset, Sample, build_samples, load_dataset_dir, load_split, load_table
from .embeddings import PAD, UNK, EmbeddingTable, build_table, load_embeddings, write_glove
from .formats import read_annotations, read_features, write_annotations, write_features
from .spans import (
    FeatureSequence,
    MomentAnnotation,
    SpanLabel,
    downsample_features,
    round_half_away,
    span_to_time,
    time_to_span,
)
from .synthetic import (
    SyntheticConfig,
    SyntheticData,
    generate_synthetic_dataset,
    query_signature,
    write_synthetic_dataset,
)

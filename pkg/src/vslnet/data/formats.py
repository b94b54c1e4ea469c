"""On-disk formats: annotation JSONL and the VSLF binary feature file.

VSLF layout (little-endian): 4-byte magic ``b"VSLF"``, uint64 n, uint64 d_v,
then n*d_v float32 values in row-major order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .spans import FeatureSequence, MomentAnnotation

MAGIC = b"VSLF"
_HEADER = struct.Struct("<4sQQ")


def write_features(path, features: np.ndarray) -> None:
    features = np.asarray(features)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError(f"features must be a non-empty 2-D array, got {features.shape}")
    n, d = features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_features(path, video_id=None) -> FeatureSequence:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d)
    return FeatureSequence(video_id or path.stem, data.astype(np.float64))


def annotation_to_dict(ann: MomentAnnotation) -> dict:
    return {
        "video_id": ann.video_id,
        "duration": ann.duration,
        "start": ann.start,
        "end": ann.end,
        "query": list(ann.query),
    }


def write_annotations(path, annotations) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(annotation_to_dict(ann)) + "\n")


def read_annotations(path) -> list[MomentAnnotation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(
                    MomentAnnotation(
                        video_id=str(rec["video_id"]),
                        duration=float(rec["duration"]),
                        start=float(rec["start"]),
                        end=float(rec["end"]),
                        query=tuple(rec["query"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
    return out

"""Annotation records and the mapping between seconds and feature indices.

A moment [start, end] seconds in a video of duration T with n features maps
to inclusive feature indices. Feature i covers [i/n*T, (i+1)/n*T), so the end
index is the last feature the moment reaches and the reconstructed end time
is (a_e + 1)/n*T. The two directions are exact inverses on valid spans.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import AnnotationError


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


@dataclass(frozen=True)
class MomentAnnotation:
    video_id: str
    duration: float
    start: float
    end: float
    query: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "query", tuple(t.lower() for t in self.query))
        if not self.duration > 0:
            raise AnnotationError(f"{self.video_id}: duration must be positive")
        if not (0.0 <= self.start < self.end <= self.duration):
            raise AnnotationError(
                f"{self.video_id}: need 0 <= start < end <= duration, got "
                f"({self.start}, {self.end}, {self.duration})"
            )
        if not self.query:
            raise AnnotationError(f"{self.video_id}: empty query")


@dataclass(frozen=True)
class SpanLabel:
    start: int
    end: int

    def __iter__(self):
        return iter((self.start, self.end))


@dataclass(frozen=True)
class FeatureSequence:
    video_id: str
    features: np.ndarray

    @property
    def length(self) -> int:
        return self.features.shape[0]


def time_to_span(start: float, end: float, duration: float, n: int) -> SpanLabel:
    if end <= start:
        raise AnnotationError(f"end time {end} must exceed start time {start}")
    if n < 1:
        raise AnnotationError("feature count must be positive")
    a_s = round_half_away(start / duration * n)
    a_e = round_half_away(end / duration * n) - 1
    a_s = min(max(a_s, 0), n - 1)
    a_e = min(max(a_e, a_s), n - 1)
    return SpanLabel(a_s, a_e)


def span_to_time(a_s: int, a_e: int, n: int, duration: float) -> tuple[float, float]:
    return a_s / n * duration, (a_e + 1) / n * duration


def downsample_indices(n: int, n_max: int) -> np.ndarray:
    if n <= n_max:
        return np.arange(n)
    if n_max == 1:
        return np.zeros(1, dtype=np.int64)
    # n_max points spaced evenly over [0, n-1], first and last included
    return np.array([round_half_away(i * (n - 1) / (n_max - 1)) for i in range(n_max)])


def downsample_features(seq: FeatureSequence, n_max: int) -> FeatureSequence:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if seq.length <= n_max:
        return seq
    idx = downsample_indices(seq.length, n_max)
    return FeatureSequence(seq.video_id, seq.features[idx])

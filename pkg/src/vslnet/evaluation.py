"""Constrained span decoding and temporal localization metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import make_batches, span_to_time
from .errors import UsageError
from .numerics import no_grad

THRESHOLDS = (0.3, 0.5, 0.7)
#: decimal IoU bins [0,0.1), ..., [0.9,1.0) plus an exact-1 bucket
HIST_EDGES = tuple(round(0.1 * i, 1) for i in range(11))
#: predicted minus ground-truth duration, seconds; open-ended outer bins
LENGTH_EDGES = (-math.inf, -10.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 10.0, math.inf)


@dataclass
class Prediction:
    video_id: str
    start_index: int
    end_index: int
    start_time: float
    end_time: float
    score: float
    highlight: np.ndarray | None = None

    def to_dict(self):
        return {
            "video_id": self.video_id,
            "start_index": self.start_index,
            "end_index": self.end_index,
            "start": self.start_time,
            "end": self.end_time,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["video_id"], int(d.get("start_index", -1)), int(d.get("end_index", -1)),
            float(d["start"]), float(d["end"]), float(d.get("score", 1.0)),
        )


def predict_span(p_start, p_end):
    """argmax of p_start[s] * p_end[e] over s <= e, via a prefix-max scan.

    Ties go to the smallest start, then the smallest end.
    """
    p_start = np.asarray(p_start, dtype=np.float64)
    p_end = np.asarray(p_end, dtype=np.float64)
    best, best_s, best_e = -1.0, 0, 0
    run_max, run_arg = -1.0, 0
    for e in range(len(p_start)):
        if p_start[e] > run_max:
            run_max, run_arg = p_start[e], e
        score = run_max * p_end[e]
        if score > best:
            best, best_s, best_e = score, run_arg, e
    return best_s, best_e, float(best)


def brute_force_span(p_start, p_end):
    """O(n^2) enumeration of all ordered pairs, same tie-break as ``predict_span``."""
    best = (-1.0, 0, 0)
    n = len(p_start)
    for s in range(n):
        for e in range(s, n):
            score = float(p_start[s]) * float(p_end[e])
            if score > best[0]:
                best = (score, s, e)
    return best[1], best[2], best[0]


def temporal_iou(a, b) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union if union > 0 else 0.0


@dataclass
class MetricsReport:
    r1: dict
    miou: float
    histogram: list
    ious: list = field(default_factory=list)
    length_errors: list = field(default_factory=list)

    @property
    def mean_length_error(self):
        return float(np.mean(self.length_errors)) if self.length_errors else 0.0

    @property
    def length_histogram(self):
        return length_error_histogram(self.length_errors)

    def to_dict(self):
        return {
            "r1_03": self.r1[0.3],
            "r1_05": self.r1[0.5],
            "r1_07": self.r1[0.7],
            "miou": self.miou,
            "count": len(self.ious),
            "mean_length_error": self.mean_length_error,
            "length_error_histogram": self.length_histogram,
            "iou_histogram": self.histogram,
        }


def iou_histogram(ious) -> list:
    counts = [0] * 11
    for v in ious:
        counts[10 if v >= 1.0 else min(int(v * 10), 9)] += 1
    return counts


def length_error_histogram(errors) -> list:
    """Counts per [LENGTH_EDGES[i], LENGTH_EDGES[i+1]) bin."""
    counts = [0] * (len(LENGTH_EDGES) - 1)
    for e in errors:
        i = 0
        while e >= LENGTH_EDGES[i + 1]:
            i += 1
        counts[i] += 1
    return counts


def _ground_truth(item):
    ann = getattr(item, "annotation", item)
    return ann.start, ann.end


def evaluate(predictions, ground_truths, thresholds=THRESHOLDS) -> MetricsReport:
    """R@1 at each threshold (strict IoU > mu), mIoU, IoU histogram and length errors.

    ``ground_truths`` holds samples or annotations aligned with ``predictions``.
    """
    gts = list(ground_truths)
    predictions = list(predictions)
    if len(predictions) != len(gts):
        raise UsageError(f"{len(predictions)} predictions for {len(gts)} ground truths")
    if not gts:
        raise UsageError("nothing to evaluate")
    ious, errs = [], []
    for p, g in zip(predictions, gts):
        gs, ge = _ground_truth(g)
        ious.append(temporal_iou((p.start_time, p.end_time), (gs, ge)))
        errs.append((p.end_time - p.start_time) - (ge - gs))
    arr = np.array(ious)
    r1 = {mu: 100.0 * float(np.mean(arr > mu)) for mu in thresholds}
    return MetricsReport(r1, 100.0 * float(arr.mean()), iou_histogram(ious), ious, errs)


def predict(model, dataset, batch_size=32, keep_highlight=False) -> list:
    """Decode one span per sample with dropout off; order follows ``dataset``."""
    out = []
    with no_grad():
        for batch in make_batches(dataset, batch_size):
            res = model.forward_batch(batch, training=False)
            ps, pe = res.p_start.data, res.p_end.data
            for i, sample in enumerate(batch.samples):
                n = sample.length
                a_s, a_e, score = predict_span(ps[i, :n], pe[i, :n])
                t_s, t_e = span_to_time(a_s, a_e, n, sample.annotation.duration)
                hl = None
                if keep_highlight and res.highlight is not None:
                    hl = res.highlight.data[i, :n].copy()
                out.append(Prediction(sample.video_id, a_s, a_e, t_s, t_e, score, hl))
    return out


def export_similarity(matrix, tokens, path) -> None:
    """Write an n x m similarity matrix as CSV: header ``index,<tokens...>``, one row per feature."""
    matrix = np.asarray(getattr(matrix, "data", matrix))
    if matrix.ndim != 2 or matrix.shape[1] != len(tokens):
        raise UsageError(f"matrix {matrix.shape} does not match {len(tokens)} tokens")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *tokens])
        for i, row in enumerate(matrix):
            w.writerow([i, *(format(float(v), ".17g") for v in row)])


def read_similarity(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    tokens = rows[0][1:]
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]]), tokens


def write_report(report: MetricsReport, out_dir, predictions=None) -> None:
    """metrics.json, iou_histogram.csv, length_error_histogram.csv and per_sample.csv."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(out_dir / "iou_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count"])
        for i, c in enumerate(report.histogram):
            lo, hi = (HIST_EDGES[i], HIST_EDGES[i + 1]) if i < 10 else (1.0, 1.0)
            w.writerow([lo, hi, c])
    with open(out_dir / "length_error_histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count"])
        for i, c in enumerate(report.length_histogram):
            w.writerow([LENGTH_EDGES[i], LENGTH_EDGES[i + 1], c])
    with open(out_dir / "per_sample.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "iou", "length_error"])
        ids = [p.video_id for p in predictions] if predictions else [""] * len(report.ious)
        for vid, iou, err in zip(ids, report.ious, report.length_errors):
            w.writerow([vid, format(iou, ".17g"), format(err, ".17g")])

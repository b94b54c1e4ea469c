from __future__ import annotations

import math

import numpy as np

from ..data.spans import round_half_away


def highlight_labels(span, n: int, alpha: float) -> np.ndarray:
    """0/1 foreground vector: the span widened by round(alpha * (a_e - a_s)) on each side."""
    a_s, a_e = span
    if math.isinf(alpha):
        return np.ones(n)
    ext = round_half_away(alpha * (a_e - a_s))
    y = np.zeros(n)
    y[max(0, a_s - ext) : min(n - 1, a_e + ext) + 1] = 1.0
    return y

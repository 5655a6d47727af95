"""Sample statistics for the benchmark harness.

The outlier rule is a single pass: mean and standard deviation are
computed once over the input and everything outside three standard
deviations of the mean is dropped. No re-iteration, so data that was not
modified comes back unchanged from a second application.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence, Tuple

import numpy as np


def three_sigma_filter(samples: Sequence[float]) -> Tuple[np.ndarray, float]:
    """Drop samples outside mean +/- 3 sigma; returns (kept, removed_fraction).

    Fewer than two samples come back unchanged with nothing removed.
    Sigma is the population standard deviation of the full input.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 2:
        return arr, 0.0
    mu = arr.mean()
    sigma = arr.std()
    keep = (arr >= mu - 3.0 * sigma) & (arr <= mu + 3.0 * sigma)
    kept = arr[keep]
    return kept, 1.0 - kept.size / arr.size


def percentile(samples: Sequence[float], p) -> float:
    """Nearest-rank percentile: the value at rank ceil(p/100 * n).

    No interpolation; the result is always an element of the input.
    ``p`` is evaluated exactly so decimal inputs like 99.9 do not pick up
    binary-float rank errors. Raises ValueError on an empty input or a
    percentile outside [0, 100].
    """
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("percentile of an empty sample set")
    if not (0 <= p <= 100):
        raise ValueError(f"percentile {p!r} outside [0, 100]")
    rank = math.ceil(Fraction(str(p)) * arr.size / 100)
    rank = min(max(rank, 1), arr.size)
    return float(arr[rank - 1])

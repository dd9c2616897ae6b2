"""Univariate robust building blocks.

These are the reference (numpy) versions of the statistics the compiled
direction-search kernels evaluate millions of times; tests compare the two.
"""

from __future__ import annotations

import math

import numpy as np


def _sample(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise ValueError("sample must contain at least one value")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sample contains NaN or infinite values")
    return arr


def median(values) -> float:
    """Middle order statistic; mean of the two middle ones for even n."""
    arr = np.sort(_sample(values))
    n = arr.size
    k = n // 2
    if n % 2:
        return float(arr[k])
    return float(0.5 * (arr[k - 1] + arr[k]))


def mad(values) -> float:
    """Median absolute deviation from the median (unscaled)."""
    arr = _sample(values)
    return median(np.abs(arr - median(arr)))


def mad_plus(values) -> float:
    """Median of the strictly positive deviations from the median, 0 if none."""
    arr = _sample(values)
    dev = arr - median(arr)
    pos = dev[dev > 0.0]
    if pos.size == 0:
        return 0.0
    return median(pos)


def univariate_halfspace_depth(x: float, values) -> float:
    """min(#{y <= x}, #{y >= x}) / n."""
    arr = _sample(values)
    below = int(np.count_nonzero(arr <= x))
    above = int(np.count_nonzero(arr >= x))
    return min(below, above) / arr.size


def _ratio(numerator: float, scale: float) -> float:
    # A degenerate scale makes any nonzero deviation infinitely outlying.
    if scale > 0.0:
        return numerator / scale
    return 0.0 if numerator == 0.0 else math.inf


def projected_outlyingness(x: float, values, asymmetric: bool = False) -> float:
    """Robustly standardised deviation of ``x`` from a univariate sample.

    Symmetric: |x - med| / MAD.  Asymmetric: (x - med)_+ / MAD_+.
    A zero scale yields 0 when the numerator is 0 and ``inf`` otherwise.
    """
    arr = _sample(values)
    med = median(arr)
    if asymmetric:
        return _ratio(max(x - med, 0.0), mad_plus(arr))
    return _ratio(abs(x - med), mad(arr))


def outlyingness_to_depth(outlyingness: float) -> float:
    """Decreasing map [0, inf] -> [0, 1], o -> 1 / (1 + o)."""
    if math.isinf(outlyingness):
        return 0.0
    return 1.0 / (1.0 + outlyingness)

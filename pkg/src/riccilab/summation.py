"""Deterministic reductions.

All quadratures in the package go through :func:`pairwise_sum`, a fixed-tree
pairwise reduction whose evaluation order depends only on the array length.
Results are therefore bit-identical across runs and thread budgets.
"""
from __future__ import annotations

import numpy as np


def pairwise_sum(values: np.ndarray) -> float:
    """Sum a 1-D (or raveled) float array with a fixed binary reduction tree."""
    buf = np.ravel(np.asarray(values, dtype=np.float64)).copy()
    n = buf.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        buf[:half] = buf[:half] + buf[half:2 * half]
        if n % 2:
            buf[half] = buf[2 * half]
            n = half + 1
        else:
            n = half
    return float(buf[0])

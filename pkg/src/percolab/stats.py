"""Small statistical helpers shared by the Monte-Carlo estimators."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Two-sided Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence,
                                                       method="wilson")
    return float(ci.low), float(ci.high)


def wilson_lower(k: int, n: int, confidence: float = 0.99) -> float:
    """One-sided lower Wilson bound at the given confidence."""
    return wilson_interval(k, n, 2 * confidence - 1)[0]


def wilson_upper(k: int, n: int, confidence: float = 0.99) -> float:
    return wilson_interval(k, n, 2 * confidence - 1)[1]


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else math.inf


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x`` (positive ``y`` only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (y > 0) & (x > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])

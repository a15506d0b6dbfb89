"""Interval information granules built from finite numeric samples.

A granule is a closed interval around the sample median chosen to maximize
the product of coverage (how many sample points fall inside) and specificity
(exp(-alpha * length), so shorter intervals score higher).  Both bounds are
always elements of the sample and are optimized independently of each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Granule",
    "GranuleError",
    "median_of",
    "evidence_score",
    "construct_granule",
    "construct_granules_batch",
]


class GranuleError(ValueError):
    """Raised for invalid samples, parameters, or bound/side mismatches."""


@dataclass(frozen=True)
class Granule:
    """Closed interval [lower, upper] with the alpha that generated it."""

    lower: float
    upper: float
    alpha: float

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise GranuleError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return (self.lower + self.upper) / 2.0


def _check_sample(values: Sequence[float]) -> list[float]:
    vals = [float(v) for v in values]
    if not vals:
        raise GranuleError("empty sample")
    for v in vals:
        if not math.isfinite(v):
            raise GranuleError(f"non-finite sample value {v!r}")
    return vals


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0.0:
        raise GranuleError(f"alpha must be finite and >= 0, got {alpha!r}")
    return alpha


def median_of(values: Sequence[float]) -> float:
    """Sample median: middle order statistic, or the mean of the two middle
    order statistics for even-sized samples."""
    vals = sorted(_check_sample(values))
    n = len(vals)
    mid = n // 2
    if n % 2 == 1:
        return vals[mid]
    return (vals[mid - 1] + vals[mid]) / 2.0


def evidence_score(
    values: Sequence[float], alpha: float, bound: float, side: str
) -> float:
    """Coverage x specificity score of a candidate bound on one side of the
    median.

    For side="upper" the score is
        #{x in sample : med <= x <= bound} * exp(-alpha * |med - bound|),
    mirrored for side="lower".  Counting is inclusive and respects
    multiplicity.
    """
    vals = _check_sample(values)
    alpha = _check_alpha(alpha)
    bound = float(bound)
    med = median_of(vals)
    if side == "upper":
        if bound < med:
            raise GranuleError(f"bound/side mismatch: {bound} < median {med}")
        count = sum(1 for v in vals if med <= v <= bound)
    elif side == "lower":
        if bound > med:
            raise GranuleError(f"bound/side mismatch: {bound} > median {med}")
        count = sum(1 for v in vals if bound <= v <= med)
    else:
        raise GranuleError(f"side must be 'lower' or 'upper', got {side!r}")
    return count * math.exp(-alpha * abs(med - bound))


def _best_bound(vals: list[float], alpha: float, med: float, side: str) -> float:
    # Candidates ordered by distance from the median, ascending, so that the
    # first strict improvement wins and score ties resolve to the most
    # specific bound.
    if side == "upper":
        candidates = sorted(v for v in vals if v >= med)
    else:
        candidates = sorted((v for v in vals if v <= med), reverse=True)
    best = None
    best_score = -math.inf
    for cand in candidates:
        score = evidence_score(vals, alpha, cand, side)
        if score > best_score:
            best, best_score = cand, score
    assert best is not None  # max >= med and min <= med always exist
    return best


def construct_granule(values: Sequence[float], alpha: float) -> Granule:
    """Build the optimal granule for a sample: each bound is the sample
    element maximizing evidence_score on its side of the median."""
    vals = _check_sample(values)
    alpha = _check_alpha(alpha)
    med = median_of(vals)
    upper = _best_bound(vals, alpha, med, "upper")
    lower = _best_bound(vals, alpha, med, "lower")
    return Granule(lower=lower, upper=upper, alpha=alpha)


def construct_granules_batch(samples: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorized granule construction for many same-length samples.

    samples: (n, k) array, one sample per row.  Returns an (n, 2) array of
    [lower, upper] bounds.  Matches construct_granule row by row, including
    the tie-break toward the median.
    """
    alpha = _check_alpha(alpha)
    v = np.sort(np.asarray(samples, dtype=np.float64), axis=1)
    if v.ndim != 2 or v.shape[1] == 0:
        raise GranuleError("samples must be a non-empty 2-d array")
    if not np.isfinite(v).all():
        raise GranuleError("non-finite sample value")
    n, k = v.shape
    mid = k // 2
    if k % 2 == 1:
        med = v[:, mid]
    else:
        med = (v[:, mid - 1] + v[:, mid]) / 2.0
    medc = med[:, None]

    # Pairwise comparisons within each row; k is small (one value per
    # classifier), so the (n, k, k) intermediates are cheap.
    le = (v[:, None, :] <= v[:, :, None]).sum(axis=2)  # #{l: v_l <= v_j}
    lt = (v[:, None, :] < v[:, :, None]).sum(axis=2)   # #{l: v_l <  v_j}
    below_med = (v < medc).sum(axis=1)[:, None]         # #{l: v_l <  med}
    le_med = (v <= medc).sum(axis=1)[:, None]           # #{l: v_l <= med}

    dist = np.abs(medc - v)
    decay = np.exp(-alpha * dist)

    upper_ok = v >= medc
    upper_scores = np.where(upper_ok, (le - below_med) * decay, -1.0)
    # Columns are ascending, so the first max is nearest the median.
    upper = v[np.arange(n), np.argmax(upper_scores, axis=1)]

    lower_ok = v <= medc
    lower_scores = np.where(lower_ok, (le_med - lt) * decay, -1.0)
    # For the lower side the nearest-median candidate has the LARGEST column
    # index; scan reversed columns so argmax's first-max rule matches.
    rev_idx = np.argmax(lower_scores[:, ::-1], axis=1)
    lower = v[np.arange(n), k - 1 - rev_idx]

    return np.stack([lower, upper], axis=1)

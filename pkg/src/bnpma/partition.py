"""Cohort summaries and their cohort-specific partition trees.

Levels 1 and 2 of each tree are cut at the reported median and interval
bounds; every deeper level splits each parent cell at the conditional F0
median.  The counts at levels 1-2 follow from reading the reported
interval as a pair of order statistics.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .centering import INF, CenteringMeasure

log = logging.getLogger(__name__)

MARKERS = ("positive", "negative", "none")


class IntervalUnidentifiable(ValueError):
    """No order-statistic interval reaches the requested confidence."""


class InvalidCohort(ValueError):
    pass


@dataclass
class CohortSummary:
    """One cohort's reported (lower, median, upper, n) plus bookkeeping."""

    cohort_id: str
    study_id: str
    marker: str
    lower: float
    median: float
    upper: float
    n: int
    conf_level: float = 0.95
    covariates: np.ndarray = field(default_factory=lambda: np.zeros(0))
    raw_covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=float)
        self.n = int(self.n)
        if self.marker not in MARKERS:
            raise InvalidCohort(f"bad marker code {self.marker!r}")
        if not (0 < self.lower < self.median < self.upper):
            raise InvalidCohort("interval ordering: need 0 < ci_lower < median < ci_upper")
        if self.n < 4:
            raise InvalidCohort("sample size must be at least 4")
        if not (0.5 < self.conf_level < 1):
            raise InvalidCohort("conf_level must lie in (0.5, 1)")


def binomial_ci_indices(n, conf_level=0.95):
    """Order-statistic indices (k, j) of the distribution-free median CI.

    ``k`` is the largest index with P(Z < k) <= alpha/2 and ``j`` the
    smallest with P(Z >= j) <= alpha/2, for Z ~ Binomial(n, 1/2).
    """
    n = int(n)
    if n < 1:
        raise IntervalUnidentifiable(f"n={n} is too small")
    half_alpha = (1.0 - conf_level) / 2.0
    # P(Z < k) = cdf(k - 1); cdf is increasing so the valid k form a prefix
    lower = stats.binom.cdf(np.arange(0, n + 1), n, 0.5)
    k = int(np.searchsorted(lower, half_alpha, side="right"))
    j = n - k + 1
    if k < 1 or k > n // 2:
        raise IntervalUnidentifiable(
            f"n={n} admits no order-statistic interval at level {conf_level}")
    return k, j


@dataclass(frozen=True)
class Counts:
    n: int
    n0: int
    n1: int
    n00: int
    n01: int
    n10: int
    n11: int


def derive_counts(cohort):
    """Interval counts at levels 1-2 implied by a reported quadruple."""
    k, j = binomial_ci_indices(cohort.n, cohort.conf_level)
    n = cohort.n
    n0 = n // 2
    n1 = n - n0
    n00 = k
    n10 = min(max(0, j - n0), n1)
    return Counts(n=n, n0=n0, n1=n1, n00=n00, n01=n0 - n00, n10=n10, n11=n1 - n10)


@dataclass
class PartitionTree:
    """Nested partition of (0, inf) down to ``depth`` levels.

    ``boundaries`` holds the 2**depth + 1 cut points of the finest level,
    from 0 to inf; coarser levels are strided views of it.
    """

    cohort_id: str
    depth: int
    boundaries: np.ndarray
    counts: Counts
    imputed_upper: bool = False

    def level(self, m):
        """Boundaries of level ``m`` (2**m cells)."""
        if not 0 <= m <= self.depth:
            raise ValueError(f"level {m} outside 0..{self.depth}")
        return self.boundaries[:: 2 ** (self.depth - m)]

    @property
    def cells(self):
        return list(zip(self.boundaries[:-1], self.boundaries[1:]))


def build_tree(cohort, f0: CenteringMeasure, depth=12):
    if depth < 2:
        raise ValueError("tree depth must be at least 2")
    for name in ("lower", "median", "upper"):
        v = getattr(cohort, name)
        if not v > 0:
            raise InvalidCohort(f"{name}={v} outside the positive support")
    imputed = False
    upper = cohort.upper
    if math.isinf(upper):
        upper = f0.conditional_median(cohort.median, INF)
        imputed = True
        log.info("cohort %s: upper bound not reached, right split imputed at %.6g",
                 cohort.cohort_id, upper)
    bounds = np.array([0.0, cohort.lower, cohort.median, upper, INF])
    for _ in range(depth - 2):
        mids = f0.split_points(bounds[:-1], bounds[1:])
        nxt = np.empty(2 * bounds.size - 1)
        nxt[0::2] = bounds
        nxt[1::2] = mids
        bounds = nxt
    return PartitionTree(cohort.cohort_id, depth, bounds, derive_counts(cohort), imputed)

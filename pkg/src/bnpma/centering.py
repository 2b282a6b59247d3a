"""Centering distributions on the positive half-line."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

INF = math.inf


class DomainError(ValueError):
    """Argument outside the support of a centering measure."""


@dataclass(frozen=True)
class CenteringMeasure:
    """Exponential or log-normal reference distribution for the trees.

    Parameters
    ----------
    family : {"exponential", "lognormal"}
    rate : float
        Exponential rate (per month).
    mu, sigma : float
        Log-normal location (log months) and scale.
    """

    family: str = "exponential"
    rate: float = math.log(2.0)
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in ("exponential", "lognormal"):
            raise ValueError(f"unknown centering family {self.family!r}")
        if self.family == "exponential" and not self.rate > 0:
            raise ValueError("exponential rate must be positive")
        if self.family == "lognormal" and not self.sigma > 0:
            raise ValueError("lognormal sigma must be positive")

    @classmethod
    def from_medians(cls, medians, family="exponential"):
        """Fit to pooled reported medians.

        The exponential version matches the pooled median; the log-normal
        version matches mean and spread of the log medians.
        """
        medians = np.asarray(medians, dtype=float)
        if medians.size == 0 or np.any(medians <= 0):
            raise DomainError("pooled medians must be positive and non-empty")
        if family == "exponential":
            return cls("exponential", rate=math.log(2.0) / float(np.median(medians)))
        logs = np.log(medians)
        sigma = float(np.std(logs)) if medians.size > 1 else 1.0
        return cls("lognormal", mu=float(np.mean(logs)), sigma=max(sigma, 1e-3))

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0)):
            raise DomainError("centering measure is defined for t > 0 only")
        return t

    def cdf(self, t):
        t = self._check_time(t)
        if self.family == "exponential":
            out = -np.expm1(-self.rate * t)
        else:
            out = stats.norm.cdf((np.log(t) - self.mu) / self.sigma)
        return out if out.ndim else float(out)

    def sf(self, t):
        t = self._check_time(t)
        if self.family == "exponential":
            out = np.exp(-self.rate * t)
        else:
            out = stats.norm.sf((np.log(t) - self.mu) / self.sigma)
        return out if out.ndim else float(out)

    def pdf(self, t):
        t = self._check_time(t)
        if self.family == "exponential":
            out = self.rate * np.exp(-self.rate * t)
        else:
            out = stats.lognorm.pdf(t, s=self.sigma, scale=math.exp(self.mu))
        return out if out.ndim else float(out)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0) & (p < 1))):
            raise DomainError("quantile level must lie in (0, 1)")
        if self.family == "exponential":
            out = -np.log1p(-p) / self.rate
        else:
            out = np.exp(self.mu + self.sigma * stats.norm.ppf(p))
        return out if out.ndim else float(out)

    def isf(self, q):
        """Inverse survival function, accurate far in the right tail."""
        q = np.asarray(q, dtype=float)
        if np.any(~((q > 0) & (q < 1))):
            raise DomainError("tail probability must lie in (0, 1)")
        if self.family == "exponential":
            out = -np.log(q) / self.rate
        else:
            out = np.exp(self.mu + self.sigma * stats.norm.isf(q))
        return out if out.ndim else float(out)

    def _cdf0(self, a):
        return 0.0 if a == 0 else (1.0 if a == INF else self.cdf(a))

    def _sf0(self, a):
        return 1.0 if a == 0 else (0.0 if a == INF else self.sf(a))

    def mass(self, a, b):
        """F0 probability of the interval (a, b); endpoints may be 0 or inf."""
        if self._cdf0(a) > 0.5:
            return self._sf0(a) - self._sf0(b)
        return self._cdf0(b) - self._cdf0(a)

    def conditional_median(self, a, b):
        """Median of F0 restricted to (a, b); ``b`` may be ``math.inf``."""
        if not (0 <= a < b):
            raise DomainError(f"empty interval ({a}, {b})")
        fa, fb = self._cdf0(a), self._cdf0(b)
        if fa > 0.5:
            # Work with survival probabilities in the upper tail.
            sa, sb = self._sf0(a), self._sf0(b)
            if not sa > sb:
                raise DomainError(f"interval ({a}, {b}) has zero centering mass")
            t = self.isf(0.5 * (sa + sb))
        else:
            if not fb > fa:
                raise DomainError(f"interval ({a}, {b}) has zero centering mass")
            t = self.quantile(0.5 * (fa + fb))
        if not (a < t < b):
            raise DomainError(f"interval ({a}, {b}) too narrow to split")
        return float(t)

    def split_points(self, a, b):
        """Vectorised :meth:`conditional_median` over arrays of cells."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        fa = np.zeros_like(a)
        fb = np.ones_like(b)
        pos_a, fin_b = a > 0, np.isfinite(b)
        fa[pos_a] = self.cdf(a[pos_a])
        fb[fin_b] = self.cdf(b[fin_b])
        sa = np.ones_like(a)
        sb = np.zeros_like(b)
        sa[pos_a] = self.sf(a[pos_a])
        sb[fin_b] = self.sf(b[fin_b])
        upper = fa > 0.5
        out = np.empty_like(a)
        if np.any(~upper):
            out[~upper] = self.quantile(0.5 * (fa[~upper] + fb[~upper]))
        if np.any(upper):
            out[upper] = self.isf(0.5 * (sa[upper] + sb[upper]))
        if not np.all((a < out) & (out < b)):
            raise DomainError("cell too narrow (or massless) to split at its F0 median")
        return out

    def conditional_cdf(self, t, a, b):
        """P(T <= t | a < T < b) under F0."""
        return self.mass(a, t) / self.mass(a, b)

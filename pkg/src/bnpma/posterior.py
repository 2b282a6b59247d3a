"""Posterior summaries: cohort medians, survival curves, marker effects,
pooled covariate effects, predictive densities and a partition estimate."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import level2_masses, deep_masses

log = logging.getLogger(__name__)


class NoMarkerPairs(ValueError):
    pass


def _cell_bounds(tree):
    b = np.asarray(tree.boundaries, dtype=float)
    return b[:-1], b[1:]


def median_from_masses(masses, tree, f0):
    """Median of a tree histogram, interpolated linearly inside its cell.

    Returns ``(median, flagged)``; ``flagged`` is True when the half-mass
    point falls in the unbounded last cell, where the conditional F0 median
    of that cell is returned instead.
    """
    masses = np.asarray(masses, dtype=float)
    lo, hi = _cell_bounds(tree)
    cum = np.cumsum(masses)
    k = int(np.searchsorted(cum, 0.5, side="left"))
    k = min(k, masses.size - 1)
    if math.isinf(hi[k]):
        return f0.conditional_median(lo[k], hi[k]), True
    before = cum[k - 1] if k > 0 else 0.0
    frac = (0.5 - before) / masses[k] if masses[k] > 0 else 0.0
    return float(lo[k] + frac * (hi[k] - lo[k])), False


def medians_from_masses(masses, bounds, f0):
    """Vectorised :func:`median_from_masses` over rows of ``masses``.

    ``bounds`` has one row of cut points per row of ``masses``.
    """
    masses = np.asarray(masses, dtype=float)
    cum = np.cumsum(masses, axis=1)
    k = np.minimum((cum < 0.5).sum(axis=1), masses.shape[1] - 1)
    rows = np.arange(masses.shape[0])
    lo = bounds[rows, k]
    hi = bounds[rows, k + 1]
    before = np.where(k > 0, cum[rows, np.maximum(k - 1, 0)], 0.0)
    mk = masses[rows, k]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(mk > 0, (0.5 - before) / mk, 0.0)
    out = lo + frac * (hi - lo)
    flagged = np.isinf(hi)
    for r in np.flatnonzero(flagged):
        out[r] = f0.conditional_median(lo[r], math.inf)
    return out, flagged


def _cdf_within(t, masses, tree, f0):
    lo, hi = _cell_bounds(tree)
    t = np.asarray(t, dtype=float)
    cum_before = np.concatenate(([0.0], np.cumsum(masses)[:-1]))
    k = np.clip(np.searchsorted(hi, t, side="left"), 0, masses.size - 1)
    a, b = lo[k], hi[k]
    frac = np.zeros_like(t)
    finite = np.isfinite(b)
    frac[finite] = (t[finite] - a[finite]) / (b[finite] - a[finite])
    tail = ~finite & (t > a)
    if np.any(tail):
        sa = f0.sf(a[tail]) if a[tail][0] > 0 else 1.0
        frac[tail] = 1.0 - f0.sf(t[tail]) / sa
    frac = np.clip(frac, 0.0, 1.0)
    return np.clip(cum_before[k] + masses[k] * frac, 0.0, 1.0)


def survival_curve(masses, tree, grid, f0):
    """S(t) of a tree histogram; linear in finite cells, F0-shaped in the last."""
    grid = np.asarray(grid, dtype=float)
    out = np.ones_like(grid)
    pos = grid > 0
    if np.any(pos):
        out[pos] = 1.0 - _cdf_within(grid[pos], masses, tree, f0)
    out[np.isposinf(grid)] = 0.0
    return out


def density_curve(masses, tree, grid, f0):
    """Piecewise density of a tree histogram on ``grid``."""
    lo, hi = _cell_bounds(tree)
    grid = np.asarray(grid, dtype=float)
    out = np.zeros_like(grid)
    pos = (grid > 0) & np.isfinite(grid)
    t = grid[pos]
    k = np.clip(np.searchsorted(hi, t, side="left"), 0, masses.size - 1)
    a, b = lo[k], hi[k]
    dens = np.empty_like(t)
    finite = np.isfinite(b)
    dens[finite] = masses[k[finite]] / (b[finite] - a[finite])
    if np.any(~finite):
        a_tail = a[~finite][0]
        dens[~finite] = masses[-1] * f0.pdf(t[~finite]) / f0.sf(a_tail)
    out[pos] = dens
    return out


def equal_tail(draws, level=0.95):
    q = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [q, 1.0 - q])
    return float(lo), float(hi)


def exceedance(draws):
    """P(D > 0) with exact ties counted as one half."""
    draws = np.asarray(draws)
    return float(np.mean(draws > 0) + 0.5 * np.mean(draws == 0))


@dataclass
class EffectSummary:
    study_id: str
    pos: int
    neg: int
    draws: np.ndarray
    mean: float
    lo95: float
    hi95: float
    p_positive: float


def summarize_draws(study_id, pos, neg, draws):
    lo, hi = equal_tail(draws)
    return EffectSummary(study_id, pos, neg, draws, float(np.mean(draws)), lo, hi,
                         exceedance(draws))


def marker_pairs(cohorts, study_ids):
    """(study, i+, i-) for studies with exactly one cohort of each marker."""
    pairs, excluded = [], []
    for s in study_ids:
        pos = [i for i, c in enumerate(cohorts) if c.study_id == s and c.marker == "positive"]
        neg = [i for i, c in enumerate(cohorts) if c.study_id == s and c.marker == "negative"]
        if len(pos) == 1 and len(neg) == 1:
            pairs.append((s, pos[0], neg[0]))
        else:
            excluded.append((s, f"{len(pos)} positive / {len(neg)} negative cohorts"))
    return pairs, excluded


def effect_summaries_from_medians(medians, cohorts, study_ids):
    """Per-study log-median-ratio summaries and the averaged P(D_s > 0).

    ``medians`` holds one row per kept draw, one column per cohort.
    """
    pairs, excluded = marker_pairs(cohorts, study_ids)
    for s, why in excluded:
        log.info("study %s excluded from marker effects: %s", s, why)
    if not pairs:
        raise NoMarkerPairs("no study has a marker-positive / marker-negative pair")
    logm = np.log(np.asarray(medians, dtype=float))
    out = {s: summarize_draws(s, ip, ineg, logm[:, ip] - logm[:, ineg]) for s, ip, ineg in pairs}
    pbar = float(np.mean([e.p_positive for e in out.values()]))
    return out, pbar, excluded


@dataclass
class PooledEffect:
    label: str
    n_studies: int
    draws: np.ndarray = field(repr=False)
    mean: float = math.nan
    lo95: float = math.nan
    hi95: float = math.nan

    @property
    def empty(self):
        return self.n_studies == 0


def _matches(cohort, selector):
    return all(str(cohort.raw_covariates.get(k)) == str(v) for k, v in selector.items())


def covariate_effect(summaries, cohorts, selector, label=None):
    """Pool D_s draws over studies whose cohorts carry every ``selector`` value.

    A study qualifies through its marker-positive cohort (both cohorts of a
    pair share study-level covariates).  An empty pool is returned with
    ``n_studies == 0`` rather than raised.
    """
    label = label or "&".join(f"{k}={v}" for k, v in selector.items())
    chosen = [e for e in summaries.values() if _matches(cohorts[e.pos], selector)]
    if not chosen:
        return PooledEffect(label, 0, np.zeros(0))
    draws = np.concatenate([e.draws for e in chosen])
    lo, hi = equal_tail(draws)
    return PooledEffect(label, len(chosen), draws, float(draws.mean()), lo, hi)


def coclustering(labels):
    labels = np.asarray(labels)
    return (labels[:, :, None] == labels[:, None, :]).mean(axis=0)


def partition_point_estimate(labels):
    """Visited partition closest in squared distance to the co-clustering
    matrix; returned with clusters renumbered 1.. by first appearance."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise ValueError("need a non-empty (draws, studies) label array")
    pi = coclustering(labels)
    loss = np.array([((lab[:, None] == lab[None, :]) - pi) ** 2 for lab in labels]).sum(axis=(1, 2))
    best = labels[int(np.argmin(loss))]
    _, first = np.unique(best, return_index=True)
    order = {lab: r + 1 for r, lab in enumerate(best[np.sort(first)])}
    return np.array([order[lab] for lab in best]), loss


class PredictiveDistribution:
    """Equal-weight mixture of posterior-mean cohort histograms."""

    def __init__(self, mean_masses, trees, f0):
        self.mean_masses = mean_masses
        self.trees = trees
        self.f0 = f0

    def density(self, t):
        return np.mean([density_curve(m, tr, t, self.f0)
                        for m, tr in zip(self.mean_masses, self.trees)], axis=0)

    def survival(self, t):
        return np.mean([survival_curve(m, tr, t, self.f0)
                        for m, tr in zip(self.mean_masses, self.trees)], axis=0)

    def breakpoints(self):
        return np.unique(np.concatenate([tr.boundaries[1:-1] for tr in self.trees]))


class PosteriorChain:
    """Kept draws of the three data-informed splits for every cohort.

    Deep-level splits are not stored: they are re-imputed from their Beta
    priors with a stream keyed by (seed, iteration), so the cell masses of
    any kept draw can be rebuilt exactly on demand.
    """

    def __init__(self, model, iterations, split_probs, labels, seed, psi=None, diagnostics=None):
        self.model = model
        self.iterations = np.asarray(iterations)
        self.split_probs = np.asarray(split_probs)  # (K, 3, I)
        self.labels = np.asarray(labels)  # (K, 3, S)
        self.seed = seed
        self.psi = psi
        self.diagnostics = diagnostics or {}
        self._medians = None
        self._flags = None

    @classmethod
    def from_node_chains(cls, model, chains, seed):
        iters = chains[0].iterations
        probs = np.stack([c.split_probs for c in chains], axis=1)
        labels = np.stack([c.labels for c in chains], axis=1)
        psi = np.stack([c.psi for c in chains], axis=1)
        diag = {c.name: c.diagnostics for c in chains}
        return cls(model, iters, probs, labels, seed, psi, diag)

    def __len__(self):
        return self.iterations.size

    @property
    def f0(self):
        return self.model.f0

    @property
    def trees(self):
        return self.model.trees

    def cell_masses(self, k):
        """(I, 2**depth) cell masses of kept draw ``k``."""
        from .gibbs import deep_rng

        y = self.split_probs[k]
        base = level2_masses(y[0], y[1], y[2])
        rng = deep_rng(self.seed, int(self.iterations[k]))
        return deep_masses(base, self.model.config.depth, self.model.config, rng)

    def _bounds(self):
        return np.array([t.boundaries for t in self.trees])

    def medians(self):
        """(K, I) implied cohort medians, computed once and cached."""
        if self._medians is None:
            K, I = len(self), self.model.n_cohorts
            out = np.empty((K, I))
            flags = np.zeros((K, I), dtype=bool)
            bounds = self._bounds()
            for k in range(K):
                out[k], flags[k] = medians_from_masses(self.cell_masses(k), bounds, self.f0)
            self._medians, self._flags = out, flags
            if flags.any():
                log.info("%d median draws fell in an unbounded cell", int(flags.sum()))
        return self._medians

    @property
    def median_flags(self):
        self.medians()
        return self._flags

    def effect_summaries(self):
        return effect_summaries_from_medians(self.medians(), self.model.cohorts,
                                             self.model.study_ids)

    def mean_masses(self, cohorts=None):
        idx = np.arange(self.model.n_cohorts) if cohorts is None else np.asarray(cohorts)
        acc = np.zeros((idx.size, 2 ** self.model.config.depth))
        for k in range(len(self)):
            acc += self.cell_masses(k)[idx]
        return acc / max(len(self), 1)

    def predictive(self, selector=None, marker=None):
        """Predictive distribution averaged over the selected cohorts, or None."""
        cohorts = self.model.cohorts
        idx = [i for i, c in enumerate(cohorts)
               if (selector is None or _matches(c, selector))
               and (marker is None or c.marker == marker)]
        if not idx or len(self) == 0:
            return None
        return PredictiveDistribution(self.mean_masses(idx), [self.trees[i] for i in idx], self.f0)

    def partition(self, node=0):
        return partition_point_estimate(self.labels[:, node, :])[0]


def reported_effects(cohorts, study_ids, z=1.959963984540054):
    """Log-ratio of reported medians with an interval from the reported CIs.

    Each cohort's log-median SE is read off its interval width; h = inf
    gives an unbounded interval.
    """
    pairs, _ = marker_pairs(cohorts, study_ids)
    out = {}
    for s, ip, ineg in pairs:
        cp, cn = cohorts[ip], cohorts[ineg]
        est = math.log(cp.median / cn.median)
        ses = []
        for c in (cp, cn):
            zc = _zcrit(c.conf_level)
            ses.append((math.log(c.upper) - math.log(c.lower)) / (2 * zc))
        se = math.sqrt(ses[0] ** 2 + ses[1] ** 2)
        out[s] = (est, est - z * se, est + z * se)
    return out


def _zcrit(conf_level):
    from scipy.stats import norm
    return float(norm.ppf(0.5 + conf_level / 2))


def effective_sample_size(x):
    """ESS from autocorrelations summed over initial positive pairs."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))

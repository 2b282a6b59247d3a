"""The BNPMA probability model.

Each cohort's distribution is a tree of splitting probabilities.  The three
data-informed splits (level 1 at the median, level 2 at the interval bounds)
are logistic regressions with a fixed cohort intercept, a study random
effect and study coefficients clustered by a truncated Dirichlet process.
Deeper splits are independent symmetric Beta draws.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import expit, logit

from .centering import CenteringMeasure
from .partition import build_tree

log = logging.getLogger(__name__)

NODES = ("root", "left", "right")
NODE_LEVEL = {"root": 1, "left": 2, "right": 2}

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(64)
# 64-node Gauss-Hermite error: ~1e-13 at sd 1.5, ~1e-10 at 2, ~5e-6 at 4.
_GH_MAX_SD = 1.5


class DimensionMismatch(ValueError):
    pass


def logistic_normal_mean(c, sd):
    """E[expit(c + eta)] for eta ~ N(0, sd**2).

    64-node Gauss-Hermite for moderate ``sd``; adaptive quadrature in the
    standard-normal variable otherwise, with a breakpoint at the logistic
    transition.
    """
    if sd <= _GH_MAX_SD:
        return float(np.dot(_GH_W, expit(c + math.sqrt(2.0) * sd * _GH_X)) / math.sqrt(math.pi))
    u0 = -c / sd
    f = lambda u: expit(c + sd * u) * math.exp(-0.5 * u * u)
    lo, hi = min(-12.0, u0 - 1.0), max(12.0, u0 + 1.0)
    val = integrate.quad(f, lo, hi, points=[u0], epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return val / math.sqrt(2 * math.pi)


def calibrate_intercept(target, total_sd):
    """Intercept c with E[expit(c + eta)] = target, eta ~ N(0, total_sd**2)."""
    if not 0 < target < 1:
        raise ValueError(f"calibration target {target} must lie in (0, 1)")
    if total_sd < 0:
        raise ValueError("total_sd must be non-negative")
    if total_sd == 0:
        return float(logit(target))
    if target == 0.5:
        return 0.0
    # E[expit(c + eta)] is increasing in c; bracket around logit(target)
    # wide enough for the logit-normal attenuation at large sd.
    c0 = float(logit(target))
    width = abs(c0) * (1.0 + total_sd) + 1.0
    lo, hi = c0 - width, c0 + width
    f = lambda c: logistic_normal_mean(c, total_sd) - target
    while f(lo) > 0:
        lo -= width
    while f(hi) < 0:
        hi += width
    return float(optimize.bisect(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                                 maxiter=500))


@dataclass
class ModelConfig:
    alpha: float = 1.0
    H: int | None = None
    c_scale: float = 2.0
    invgamma_a: float = 3.0
    invgamma_b: float = 2.0
    depth: int = 12
    random_effects: bool = True
    marker_covariate: bool = True
    standardize: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("model.alpha must be positive")
        if self.H is not None and self.H < 1:
            raise ValueError("model.H must be at least 1")
        if not self.c_scale > 0:
            raise ValueError("model.c_scale must be positive")
        if not (self.invgamma_a > 1 and self.invgamma_b > 0):
            raise ValueError("need invgamma_a > 1 and invgamma_b > 0")
        if self.depth < 2:
            raise ValueError("model.depth must be at least 2")

    def truncation(self, n_studies):
        return self.H if self.H is not None else min(25, n_studies + 5)

    def atom_variance(self, level):
        return self.c_scale * 2.0 ** level

    def deep_beta(self, level):
        """Symmetric Beta parameter for splits creating level ``level`` cells."""
        return self.c_scale * 2.0 ** level

    @property
    def psi_mean(self):
        return self.invgamma_b / (self.invgamma_a - 1.0)


@dataclass
class SplitNode:
    """Fixed data and prior quantities of one data-informed split."""

    name: str
    level: int
    successes: np.ndarray  # count in the left child, per cohort
    trials: np.ndarray  # count in the parent set
    X: np.ndarray
    offsets: np.ndarray
    study: np.ndarray  # study index of each cohort
    n_studies: int
    targets: np.ndarray
    prior_var: float
    alpha: float
    H: int
    invgamma_a: float
    invgamma_b: float
    random_effects: bool = True

    @property
    def n_cohorts(self):
        return self.successes.shape[0]

    @property
    def n_covariates(self):
        return self.X.shape[1]

    @property
    def kappa(self):
        return self.successes - 0.5 * self.trials


@dataclass
class ClusterState:
    """Truncated-DP state of one split node."""

    atoms: np.ndarray  # (H, p)
    v: np.ndarray
    w: np.ndarray
    labels: np.ndarray  # (S,) in 0..H-1
    z: np.ndarray  # (S,)
    psi: float
    omega: np.ndarray = field(default=None)

    @property
    def H(self):
        return self.atoms.shape[0]

    def sizes(self):
        return np.bincount(self.labels, minlength=self.H)

    def linear_predictor(self, node):
        eta = node.offsets + np.einsum("ij,ij->i", node.X, self.atoms[self.labels[node.study]])
        if node.random_effects:
            eta = eta + self.z[node.study]
        return eta

    def copy(self):
        return ClusterState(self.atoms.copy(), self.v.copy(), self.w.copy(),
                            self.labels.copy(), self.z.copy(), float(self.psi),
                            None if self.omega is None else self.omega.copy())


def stick_breaking(v):
    v = np.asarray(v, dtype=float)
    rest = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    return v * rest


def draw_prior_state(node, rng):
    """One draw of a node's cluster state from its prior."""
    H, p, S = node.H, node.n_covariates, node.n_studies
    atoms = rng.normal(0.0, math.sqrt(node.prior_var), size=(H, p))
    v = rng.beta(1.0, node.alpha, size=H)
    v[-1] = 1.0
    w = stick_breaking(v)
    labels = rng.choice(H, size=S, p=w / w.sum())
    psi = 1.0 / rng.gamma(node.invgamma_a, 1.0 / node.invgamma_b)
    if node.random_effects:
        z = rng.normal(0.0, math.sqrt(psi), size=S)
    else:
        z = np.zeros(S)
    return ClusterState(atoms, v, w, labels, z, psi)


def deep_masses(level2, depth, config, rng):
    """Refine level-2 cell masses to ``depth`` with prior Beta splits.

    ``level2`` has shape (I, 4); the result has shape (I, 2**depth), cells
    ordered left to right.
    """
    masses = np.asarray(level2, dtype=float)
    for m in range(3, depth + 1):
        a = config.deep_beta(m)
        y = rng.beta(a, a, size=masses.shape)
        nxt = np.empty((masses.shape[0], 2 * masses.shape[1]))
        nxt[:, 0::2] = masses * y
        nxt[:, 1::2] = masses * (1.0 - y)
        masses = nxt
    return masses


def level2_masses(y_root, y_left, y_right):
    y_root, y_left, y_right = map(np.asarray, (y_root, y_left, y_right))
    return np.stack([y_root * y_left, y_root * (1 - y_left),
                     (1 - y_root) * y_right, (1 - y_root) * (1 - y_right)], axis=-1)


class BNPMAModel:
    """Three split nodes built from a list of cohorts.

    Parameters
    ----------
    cohorts : list of CohortSummary
    f0 : CenteringMeasure
    config : ModelConfig
    """

    def __init__(self, cohorts, f0: CenteringMeasure, config=None):
        if not cohorts:
            raise ValueError("empty dataset")
        self.config = config or ModelConfig()
        self.cohorts = list(cohorts)
        self.f0 = f0
        dims = {c.covariates.shape[0] for c in self.cohorts}
        if len(dims) != 1:
            raise DimensionMismatch(f"covariate dimensions differ across cohorts: {sorted(dims)}")
        self.study_ids = list(dict.fromkeys(c.study_id for c in self.cohorts))
        index = {s: k for k, s in enumerate(self.study_ids)}
        self.study = np.array([index[c.study_id] for c in self.cohorts], dtype=np.int64)
        X = np.array([c.covariates for c in self.cohorts], dtype=float).reshape(len(self.cohorts), -1)
        self.center = np.zeros(X.shape[1])
        self.scale = np.ones(X.shape[1])
        if self.config.standardize:
            X = self._standardize(X)
        if self.config.marker_covariate:
            marker = np.array([[1.0 if c.marker == "positive" else 0.0] for c in self.cohorts])
            X = np.hstack([X, marker])
        self.X = X
        self.trees = [build_tree(c, f0, self.config.depth) for c in self.cohorts]
        self.nodes = [self._make_node(name) for name in NODES]

    def _standardize(self, X):
        # 0/1 indicator columns are left as they are
        for j in range(X.shape[1]):
            col = X[:, j]
            if np.all((col == 0) | (col == 1)):
                continue
            sd = col.std()
            self.center[j] = col.mean()
            self.scale[j] = sd if sd > 0 else 1.0
        return (X - self.center) / self.scale

    @property
    def n_studies(self):
        return len(self.study_ids)

    @property
    def n_cohorts(self):
        return len(self.cohorts)

    def _targets(self, name):
        f0 = self.f0
        out = []
        for tree in self.trees:
            _, l, m, h, _ = tree.level(2)
            if name == "root":
                out.append(f0.mass(0.0, m))
            elif name == "left":
                out.append(f0.mass(0.0, l) / f0.mass(0.0, m))
            else:
                out.append(f0.mass(m, h) / f0.mass(m, math.inf))
        return np.array(out)

    def _make_node(self, name):
        cfg = self.config
        level = NODE_LEVEL[name]
        counts = [t.counts for t in self.trees]
        if name == "root":
            succ = [c.n0 for c in counts]
            trials = [c.n for c in counts]
        elif name == "left":
            succ = [c.n00 for c in counts]
            trials = [c.n0 for c in counts]
        else:
            succ = [c.n10 for c in counts]
            trials = [c.n1 for c in counts]
        prior_var = cfg.atom_variance(level)
        targets = self._targets(name)
        extra = cfg.psi_mean if cfg.random_effects else 0.0
        total_sd = np.sqrt(prior_var * np.einsum("ij,ij->i", self.X, self.X) + extra)
        offsets = np.array([calibrate_intercept(t, s) for t, s in zip(targets, total_sd)])
        return SplitNode(
            name=name, level=level,
            successes=np.array(succ, dtype=np.int64), trials=np.array(trials, dtype=np.int64),
            X=self.X, offsets=offsets, study=self.study, n_studies=self.n_studies,
            targets=targets, prior_var=prior_var, alpha=cfg.alpha,
            H=cfg.truncation(self.n_studies), invgamma_a=cfg.invgamma_a,
            invgamma_b=cfg.invgamma_b, random_effects=cfg.random_effects)

    def init_state(self, rngs):
        """Prior draw of every node's state; ``rngs`` holds one stream per node."""
        states = []
        for node, rng in zip(self.nodes, rngs):
            st = draw_prior_state(node, rng)
            states.append(st)
        return states

    def split_probabilities(self, states):
        """(3, I) array of the data-informed splitting probabilities."""
        return np.stack([expit(st.linear_predictor(node)) for node, st in zip(self.nodes, states)])

    def prior_predictive_tree(self, states, cohort, rng):
        """Cell masses at the model depth for one cohort index."""
        y = self.split_probabilities(states)[:, cohort]
        base = level2_masses(y[0], y[1], y[2])[None, :]
        return deep_masses(base, self.config.depth, self.config, rng)[0]

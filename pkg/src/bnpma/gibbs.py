"""Blocked Gibbs sampler for the three split nodes.

Each node is an independent posterior: its chain runs on its own random
stream, so the nodes can be sampled sequentially or in separate processes
with identical results.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit

from .model import NODES, ClusterState, draw_prior_state, stick_breaking
from .polya_gamma import sample_pg_many

log = logging.getLogger(__name__)

JITTER = 1e-8
DEEP_STREAM = len(NODES)


class SamplerError(RuntimeError):
    pass


def node_rng(seed, node_index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(node_index,)))


def deep_rng(seed, iteration):
    """Stream for the prior imputation of deep levels at one kept iteration."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(DEEP_STREAM, iteration)))


def binomial_loglik(successes, trials, eta):
    """log of exp(eta)**n / (1 + exp(eta))**N, broadcasting over ``eta``."""
    return successes * eta - trials * np.logaddexp(0.0, eta)


def atom_posterior(design, omega, kappa_star, prior_prec):
    """Mean and covariance of the Gaussian conditional of the coefficients.

    V = (X' diag(omega) X + diag(prior_prec))^-1, mean = V X' kappa_star,
    with the prior mean at zero.
    """
    precision = (design.T * omega) @ design + np.diag(prior_prec)
    cov = np.linalg.inv(precision)
    return cov @ (design.T @ kappa_star), cov


@dataclass
class Diagnostics:
    jitter_retries: int = 0
    pg_clamps: int = 0
    degenerate_labels: int = 0

    def merge(self, other):
        return Diagnostics(self.jitter_retries + other.jitter_retries,
                           self.pg_clamps + other.pg_clamps,
                           self.degenerate_labels + other.degenerate_labels)


class NodeSampler:
    """Gibbs kernel for one split node.

    One sweep draws, in order: stick-breaking weights, study labels,
    Polya-Gamma latents, cluster coefficients with the member studies'
    random effects, and the random-effect variance.  Labels are drawn with
    the latents integrated out and the latents are then refreshed under the
    new labels, so the blocks compose to a valid kernel.
    """

    def __init__(self, node, rng, state=None):
        self.node = node
        self.rng = rng
        self.state = state if state is not None else draw_prior_state(node, rng)
        self.diagnostics = Diagnostics()
        # study-by-cohort incidence, used to sum cohort log-likelihoods
        self._incidence = np.zeros((node.n_studies, node.n_cohorts))
        self._incidence[node.study, np.arange(node.n_cohorts)] = 1.0
        self._members = [np.flatnonzero(node.study == s) for s in range(node.n_studies)]
        if self.state.omega is None:
            self.update_pg_latents()

    def update_weights(self):
        st, node = self.state, self.node
        m = st.sizes()
        tail = np.concatenate((np.cumsum(m[::-1])[::-1][1:], [0]))
        v = self.rng.beta(1.0 + m, node.alpha + tail)
        v[-1] = 1.0
        st.v = v
        st.w = stick_breaking(v)

    def update_labels(self):
        st, node, rng = self.state, self.node, self.rng
        H, S = st.H, node.n_studies
        if H == 1:
            st.labels[:] = 0
            return
        # cohort x cluster linear predictors without the random effect
        fixed = node.offsets[:, None] + node.X @ st.atoms.T
        if node.random_effects:
            slots = rng.normal(0.0, math.sqrt(st.psi), size=(S, H))
            slots[np.arange(S), st.labels] = st.z
            eta = fixed + slots[node.study]
        else:
            slots = None
            eta = fixed
        ll = self._incidence @ binomial_loglik(node.successes[:, None], node.trials[:, None], eta)
        with np.errstate(divide="ignore"):
            logp = np.log(st.w)[None, :] + ll
        top = logp.max(axis=1, keepdims=True)
        u = rng.random(S)
        for s in range(S):
            if not np.isfinite(top[s, 0]):
                self.diagnostics.degenerate_labels += 1
                log.warning("node %s: degenerate label probabilities for study %d", node.name, s)
                continue
            p = np.exp(logp[s] - top[s, 0])
            cdf = np.cumsum(p)
            h = int(np.searchsorted(cdf, u[s] * cdf[-1], side="right"))
            h = min(h, H - 1)
            st.labels[s] = h
            if slots is not None:
                st.z[s] = slots[s, h]

    def update_pg_latents(self):
        st, node = self.state, self.node
        eta = st.linear_predictor(node)
        st.omega, clamped = sample_pg_many(node.trials, eta, self.rng)
        self.diagnostics.pg_clamps += clamped

    def _draw_gaussian(self, precision, rhs):
        dim = precision.shape[0]
        try:
            chol = np.linalg.cholesky(precision)
        except np.linalg.LinAlgError:
            self.diagnostics.jitter_retries += 1
            try:
                chol = np.linalg.cholesky(precision + JITTER * np.eye(dim))
            except np.linalg.LinAlgError as exc:
                raise SamplerError(f"node {self.node.name}: posterior precision "
                                   "not positive definite") from exc
        mean = solve_triangular(chol.T, solve_triangular(chol, rhs, lower=True), lower=False)
        eps = self.rng.standard_normal(dim)
        return mean + solve_triangular(chol.T, eps, lower=False)

    def update_atoms(self):
        st, node, rng = self.state, self.node, self.rng
        p = node.n_covariates
        kappa = node.kappa - st.omega * node.offsets
        occupied = np.zeros(st.H, dtype=bool)
        occupied[st.labels] = True
        for h in range(st.H):
            if not occupied[h]:
                st.atoms[h] = rng.normal(0.0, math.sqrt(node.prior_var), size=p)
                continue
            studies = np.flatnonzero(st.labels == h)
            rows = np.concatenate([self._members[s] for s in studies])
            if node.random_effects:
                ind = np.zeros((rows.size, studies.size))
                pos = np.repeat(np.arange(studies.size), [self._members[s].size for s in studies])
                ind[np.arange(rows.size), pos] = 1.0
                design = np.hstack([node.X[rows], ind])
                prior_prec = np.concatenate([np.full(p, 1.0 / node.prior_var),
                                             np.full(studies.size, 1.0 / st.psi)])
            else:
                design = node.X[rows]
                prior_prec = np.full(p, 1.0 / node.prior_var)
            if design.shape[1] == 0:
                continue
            om = st.omega[rows]
            precision = (design.T * om) @ design + np.diag(prior_prec)
            draw = self._draw_gaussian(precision, design.T @ kappa[rows])
            st.atoms[h] = draw[:p]
            if node.random_effects:
                st.z[studies] = draw[p:]

    def update_psi(self):
        st, node = self.state, self.node
        if not node.random_effects:
            return
        shape = node.invgamma_a + 0.5 * node.n_studies
        rate = node.invgamma_b + 0.5 * float(np.dot(st.z, st.z))
        st.psi = 1.0 / self.rng.gamma(shape, 1.0 / rate)

    def sweep(self):
        self.update_weights()
        self.update_labels()
        self.update_pg_latents()
        self.update_atoms()
        self.update_psi()

    def split_probabilities(self):
        return expit(self.state.linear_predictor(self.node))


@dataclass
class NodeChain:
    name: str
    iterations: np.ndarray
    split_probs: np.ndarray  # (K, I)
    labels: np.ndarray  # (K, S)
    psi: np.ndarray  # (K,)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def kept_iterations(n_iter, burn_in, thin):
    if n_iter < 0 or burn_in < 0 or thin < 1:
        raise ValueError("need n_iter >= 0, burn_in >= 0 and thin >= 1")
    if n_iter and burn_in >= n_iter:
        raise ValueError("burn_in must be smaller than n_iter")
    return np.arange(burn_in + thin, n_iter + 1, thin)


def run_node_chain(node, seed, node_index, n_iter, burn_in, thin, progress_every=0):
    """Initialise one node from its prior and run its chain."""
    rng = node_rng(seed, node_index)
    sampler = NodeSampler(node, rng)
    keep = kept_iterations(n_iter, burn_in, thin)
    K = keep.size
    probs = np.empty((K, node.n_cohorts))
    labels = np.empty((K, node.n_studies), dtype=np.int64)
    psi = np.empty(K)
    k = 0
    for it in range(1, n_iter + 1):
        sampler.sweep()
        if k < K and it == keep[k]:
            probs[k] = sampler.split_probabilities()
            labels[k] = sampler.state.labels
            psi[k] = sampler.state.psi
            k += 1
        if progress_every and it % progress_every == 0:
            log.info("node %s: iteration %d/%d", node.name, it, n_iter)
    return NodeChain(node.name, keep, probs, labels, psi, sampler.diagnostics)


def _run_node_args(args):
    return run_node_chain(*args)


def run_chain(model, n_iter, burn_in, thin, seed, workers=1, progress_every=0):
    """Run all three node chains and collect them into a posterior chain."""
    from .posterior import PosteriorChain

    if seed is None:
        raise ValueError("a seed is required")
    jobs = [(node, seed, k, n_iter, burn_in, thin, progress_every)
            for k, node in enumerate(model.nodes)]
    if workers > 1 and n_iter > 0:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            chains = list(pool.map(_run_node_args, jobs))
    else:
        chains = [_run_node_args(j) for j in jobs]
    return PosteriorChain.from_node_chains(model, chains, seed)

import math

import numpy as np
import pytest

from bnpma.model import SplitNode

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_node(successes, trials, X, study=None, offsets=None, H=1, alpha=1.0,
              prior_var=4.0, random_effects=False, a=3.0, b=2.0, level=1):
    """Hand-built split node for sampler tests."""
    successes = np.asarray(successes, dtype=np.int64)
    trials = np.asarray(trials, dtype=np.int64)
    X = np.asarray(X, dtype=float).reshape(successes.size, -1)
    study = np.arange(successes.size) if study is None else np.asarray(study)
    offsets = np.zeros(successes.size) if offsets is None else np.asarray(offsets, float)
    return SplitNode(name="root", level=level, successes=successes, trials=trials, X=X,
                     offsets=offsets, study=study, n_studies=int(study.max()) + 1,
                     targets=np.full(successes.size, 0.5), prior_var=prior_var, alpha=alpha,
                     H=H, invgamma_a=a, invgamma_b=b, random_effects=random_effects)


@pytest.fixture
def five_cohorts():
    from bnpma import CohortSummary
    return [
        CohortSummary("a", "s1", "positive", 2.0, 4.0, 9.0, 50, covariates=[1, 0]),
        CohortSummary("b", "s1", "negative", 1.5, 3.0, 6.0, 40, covariates=[1, 0]),
        CohortSummary("c", "s2", "positive", 5.0, 8.0, 15.0, 60, covariates=[0, 1]),
        CohortSummary("d", "s2", "negative", 3.0, 5.5, 10.0, 30, covariates=[0, 1]),
        CohortSummary("e", "s3", "none", 1.0, 2.5, math.inf, 20, covariates=[0, 0]),
    ]

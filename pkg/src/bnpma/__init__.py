"""Bayesian nonparametric meta-analysis of median event times."""
from .centering import CenteringMeasure
from .gibbs import NodeSampler, run_chain
from .model import BNPMAModel, ModelConfig, calibrate_intercept
from .partition import (CohortSummary, PartitionTree, binomial_ci_indices, build_tree,
                        derive_counts)
from .polya_gamma import BACKEND, sample_pg, sample_pg_many
from .posterior import PosteriorChain

__all__ = [
    "BACKEND", "BNPMAModel", "CenteringMeasure", "CohortSummary", "ModelConfig",
    "NodeSampler", "PartitionTree", "PosteriorChain", "binomial_ci_indices", "build_tree",
    "calibrate_intercept", "derive_counts", "run_chain", "sample_pg", "sample_pg_many",
]

__version__ = "0.1.0"

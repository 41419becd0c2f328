"""Dirichlet process mixture regression with shrinkage baseline priors."""

from .data import Dataset, NormState, fit_norm_state, load_csv, normalize_dataset
from .model import (
    Hyperparams,
    MixtureState,
    Partition,
    PosteriorDraws,
    compute_ng_V,
    expected_clusters_prior,
    init_state,
)
from .postprocess import (
    ClusterEstimate,
    SelectionReport,
    a_auc,
    adjusted_rand_index,
    ase,
    greedy_vi_estimate,
    prediction_errors,
    sn_select,
    vi_distance,
)
from .predict import (
    marginal_x_prior_logpdf,
    predictive_density,
    predictive_expectation,
    urn_allocation_logprobs,
)
from .rng import RngStream
from .sampler import ChainConfig, run_chain
from .simulate import SimTruth, generate_generic_mixture, generate_paper_dataset

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "ClusterEstimate",
    "Dataset",
    "Hyperparams",
    "MixtureState",
    "NormState",
    "Partition",
    "PosteriorDraws",
    "RngStream",
    "SelectionReport",
    "SimTruth",
    "a_auc",
    "adjusted_rand_index",
    "ase",
    "compute_ng_V",
    "expected_clusters_prior",
    "fit_norm_state",
    "generate_generic_mixture",
    "generate_paper_dataset",
    "greedy_vi_estimate",
    "init_state",
    "load_csv",
    "marginal_x_prior_logpdf",
    "normalize_dataset",
    "prediction_errors",
    "predictive_density",
    "predictive_expectation",
    "run_chain",
    "sn_select",
    "urn_allocation_logprobs",
    "vi_distance",
]

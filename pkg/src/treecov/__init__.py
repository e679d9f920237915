"""Tree-structured covariance learning for latent Gaussian vectors observed
through a noisy underdetermined linear map.

The core pieces: validated Gaussian covariance types and divergences
(:mod:`treecov.gaussian`), maximum-mutual-information spanning trees and
their marginal-matching covariances (:mod:`treecov.tree`), the observation
model y = H x + w (:mod:`treecov.linear`), the alternating posterior /
tree-refit iteration (:mod:`treecov.em`), and the synthetic comparison
experiment with its CLI (:mod:`treecov.experiment`, :mod:`treecov.cli`).
"""

__version__ = "0.1.0"

from .gaussian import (
    CovMatrix,
    DegenerateCorrelationError,
    GaussianModel,
    NotPositiveDefiniteError,
    NumericalError,
    correlation,
    kl_gaussian,
    kl_tree_simplified,
    pairwise_mutual_information,
)
from .tree import (
    SpanningTree,
    TreeApproxResult,
    brute_force_optimal_tree,
    chow_liu,
    edge_set_equal,
    prufer_decode,
    tree_covariance,
)
from .linear import (
    LinearModel,
    ObservationSet,
    empirical_gaussian,
    observation_cov,
    observation_kl,
    read_matrix_csv,
    sample_observations,
    write_matrix_csv,
)
from .em import (
    EmConfig,
    EmIteration,
    EmMonotonicityWarning,
    EmTrace,
    PosteriorGaussian,
    StopReason,
    compute_omega,
    em_step,
    posterior,
    run_em,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    MAggregate,
    SweepResult,
    TrialFailure,
    TrialRecord,
    config_from_mapping,
    derive_seed,
    emit_results,
    generate_ground_truth,
    generate_mixing,
    generate_prior,
    parse_config_file,
    run_sweep,
)

__all__ = [
    "__version__",
    "CovMatrix",
    "GaussianModel",
    "NotPositiveDefiniteError",
    "DegenerateCorrelationError",
    "NumericalError",
    "kl_gaussian",
    "kl_tree_simplified",
    "correlation",
    "pairwise_mutual_information",
    "SpanningTree",
    "TreeApproxResult",
    "chow_liu",
    "tree_covariance",
    "brute_force_optimal_tree",
    "edge_set_equal",
    "prufer_decode",
    "LinearModel",
    "ObservationSet",
    "sample_observations",
    "observation_cov",
    "empirical_gaussian",
    "observation_kl",
    "read_matrix_csv",
    "write_matrix_csv",
    "PosteriorGaussian",
    "EmConfig",
    "EmIteration",
    "EmTrace",
    "EmMonotonicityWarning",
    "StopReason",
    "posterior",
    "compute_omega",
    "em_step",
    "run_em",
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "TrialFailure",
    "MAggregate",
    "SweepResult",
    "derive_seed",
    "generate_ground_truth",
    "generate_prior",
    "generate_mixing",
    "parse_config_file",
    "config_from_mapping",
    "run_sweep",
    "emit_results",
]

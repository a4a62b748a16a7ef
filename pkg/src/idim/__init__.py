__version__ = "0.1.0"

from idim.datasets import GeneratorSpec, Kind, generate
from idim.errors import ConfigError, DataError, IdimError
from idim.geometry import (
    Metric,
    PointCloud,
    RatioSet,
    compute_mus,
    deduplicate,
    distance_matrix,
    knn,
)
from idim.hidalgo import HidalgoChains, HidalgoConfig, PriorType, run_hidalgo
from idim.posterior import (
    PosteriorSummary,
    cluster_from_psm,
    fix_label_switching,
    id_by_class,
    nn_distance_profile,
    posterior_similarity,
    summarize_chains,
    summarize_ids,
)
from idim.twonn import Method, TwoNNFit, twonn, twonn_bayes, twonn_linfit, twonn_mle

__all__ = [
    "compute_mus",
    "deduplicate",
    "distance_matrix",
    "knn",
    "twonn",
    "twonn_linfit",
    "twonn_mle",
    "twonn_bayes",
    "run_hidalgo",
    "fix_label_switching",
    "summarize_ids",
    "posterior_similarity",
    "cluster_from_psm",
    "id_by_class",
    "nn_distance_profile",
    "summarize_chains",
    "generate",
    "GeneratorSpec",
    "Kind",
    "Metric",
    "Method",
    "PriorType",
    "PointCloud",
    "RatioSet",
    "TwoNNFit",
    "HidalgoConfig",
    "HidalgoChains",
    "PosteriorSummary",
    "IdimError",
    "DataError",
    "ConfigError",
]

"""Rank-based sensitivity screening plus variance-driven active sampling.

The package splits into small layers: ``data`` (sample tables, CSV, seeded
streams), ``blackbox`` (analytic generator and replay pool), ``sensitivity``
(rank correlation and feature screening), ``surrogate`` (exact GP
regression), ``sampler`` (acquisition flows), ``harness`` (experiments and
metrics) and ``cli``.
"""

from .blackbox import GFunction, ReplayPool
from .data import SampleSet, Split, load_csv, random_split, save_csv, stream_rng
from .harness import (
    MethodComparison,
    NullMaxStudy,
    compare_methods,
    null_max_study,
    r2_score,
    scaling_regression,
    validation_study,
)
from .sampler import (
    METHODS,
    FlowConfig,
    FlowResult,
    RunTrace,
    assemble_point,
    max_variance_candidate,
    run_flow,
    run_hybrid_flow,
)
from .sensitivity import (
    OlsFit,
    SensitivityReport,
    XiFeatureSelector,
    gumbel_constants,
    noise_threshold,
    ols_fit,
    rank_features,
    xi_correlation,
    xi_max,
)
from .surrogate import (
    GaussianProcessSurrogate,
    HyperparameterGrid,
    SquaredExponentialKernel,
    fit_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "GFunction",
    "ReplayPool",
    "SampleSet",
    "Split",
    "load_csv",
    "save_csv",
    "random_split",
    "stream_rng",
    "MethodComparison",
    "NullMaxStudy",
    "compare_methods",
    "null_max_study",
    "r2_score",
    "scaling_regression",
    "validation_study",
    "METHODS",
    "FlowConfig",
    "FlowResult",
    "RunTrace",
    "assemble_point",
    "max_variance_candidate",
    "run_flow",
    "run_hybrid_flow",
    "OlsFit",
    "SensitivityReport",
    "XiFeatureSelector",
    "gumbel_constants",
    "noise_threshold",
    "ols_fit",
    "rank_features",
    "xi_correlation",
    "xi_max",
    "GaussianProcessSurrogate",
    "HyperparameterGrid",
    "SquaredExponentialKernel",
    "fit_kernel",
    "__version__",
]

"""Fixed-landscape likelihood-free inference.

All simulation randomness is drawn once as a matrix of uniform quantiles.
Simulators consume those quantiles through inverse-transform kernels, so the
discrepancy between observed and simulated summaries becomes a deterministic
function of the parameters that ordinary optimizers can minimize.
"""

from .objective import (
    Bounds,
    Evaluation,
    FixedObjective,
    ObjectiveSpec,
    ParameterVector,
    SimulatorSpec,
    UnsupportedOperation,
    evaluate,
    evaluate_with_gradient,
    evaluate_with_hessian,
)
from .optimize import (
    InferenceResult,
    OptimizationFailure,
    OptimizerConfig,
    Problem,
    brent_minimize,
    empirical_distribution,
    multi_start,
    nelder_mead,
    newton_box,
    outlier_filter,
    uniform_start_sampler,
)
from .randomness import (
    ContractViolation,
    QuantileMatrix,
    beta_quantile,
    binomial_quantile,
    gamma_quantile,
    make_quantile_matrix,
    normal_quantile,
    poisson_quantile,
)
from .statistics import (
    DegenerateSampleError,
    ks_distance,
    moment_estimates,
    wasserstein1,
)

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "ContractViolation",
    "DegenerateSampleError",
    "Evaluation",
    "FixedObjective",
    "InferenceResult",
    "ObjectiveSpec",
    "OptimizationFailure",
    "OptimizerConfig",
    "ParameterVector",
    "Problem",
    "QuantileMatrix",
    "SimulatorSpec",
    "UnsupportedOperation",
    "beta_quantile",
    "binomial_quantile",
    "brent_minimize",
    "empirical_distribution",
    "evaluate",
    "evaluate_with_gradient",
    "evaluate_with_hessian",
    "gamma_quantile",
    "ks_distance",
    "make_quantile_matrix",
    "moment_estimates",
    "multi_start",
    "nelder_mead",
    "newton_box",
    "normal_quantile",
    "outlier_filter",
    "poisson_quantile",
    "uniform_start_sampler",
    "wasserstein1",
]

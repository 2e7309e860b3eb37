"""Wasserstein regression with empirical measures.

Global and local Fréchet regression for distribution-valued responses
observed only through raw samples of varying (possibly tiny) size.
"""

from .baseline import KdeConfig, fit_two_step, kde_quantile
from .exceptions import (
    DegenerateDesignError,
    ExtrapolationWarning,
    GridCapWarning,
    GridMismatchError,
    InfeasibleUnitError,
    InsufficientLocalDataError,
    InvalidArgumentError,
    RemError,
    RemWarning,
    TwoStepExclusionWarning,
    ZeroObservationUnitWarning,
)
from .measures import (
    DensityCurve,
    DomainInterval,
    EmpiricalMeasure,
    QuantileGrid,
    barycenter,
    empirical_quantile,
    lcm_grid,
    project_to_wasserstein,
    quantile_to_density,
    wasserstein_distance,
    weighted_quantile_mean,
)
from .regression import (
    CovariateSample,
    KernelSpec,
    Prediction,
    RemModel,
    fit,
    global_weights,
    local_weights,
    predict,
    predict_batch,
)

__version__ = "0.1.0"

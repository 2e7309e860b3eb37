"""Exception and warning classes.

Every class carries a stable ``code`` string so command-line output and
logs can be matched without parsing messages.
"""


class RemError(Exception):
    """Base class for all errors raised by wassrem."""

    code = "rem-error"


class InvalidArgumentError(RemError, ValueError):
    code = "invalid-argument"


class GridMismatchError(RemError, ValueError):
    code = "grid-mismatch"


class DegenerateDesignError(RemError, ValueError):
    """Covariate covariance is singular or badly conditioned."""

    code = "degenerate-design"


class InsufficientLocalDataError(RemError, ValueError):
    """Kernel window holds too little spread to form local linear weights."""

    code = "insufficient-local-data"


class InfeasibleUnitError(RemError, ValueError):
    """A unit has too few observations for kernel density presmoothing."""

    code = "infeasible-unit"


class FitError(RemError, ValueError):
    code = "fit-error"


class IngestionError(RemError, ValueError):
    code = "ingestion-error"


class SimulationError(RemError, RuntimeError):
    code = "simulation-failed"


class RemWarning(UserWarning):
    code = "rem-warning"


class GridCapWarning(RemWarning):
    """Grid cap below the largest sample size; stretching is inexact."""

    code = "grid-cap-below-sample-size"


class ExtrapolationWarning(RemWarning):
    code = "extrapolation"


class ZeroObservationUnitWarning(RemWarning):
    code = "zero-observation-unit"


class TwoStepExclusionWarning(RemWarning):
    code = "two-step-exclusion"

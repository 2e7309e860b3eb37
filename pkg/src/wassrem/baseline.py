"""Two-step comparison method: kernel density presmoothing, then regression.

Each unit's sample is replaced by a Gaussian kernel density estimate whose
CDF is inverted numerically; the resulting quantile grids go through the
same weighting and projection pipeline as REM.  Units with fewer than two
observations cannot be presmoothed and are dropped.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .exceptions import FitError, InfeasibleUnitError, InvalidArgumentError, TwoStepExclusionWarning
from .measures import DomainInterval, EmpiricalMeasure, QuantileGrid, silverman_bandwidth
from .regression import CovariateSample, RemModel, make_model

logger = logging.getLogger(__name__)

MIN_UNIT_SIZE = 2
DEFAULT_TWO_STEP_GRID = 500
# spread used when a sample has no spread at all (every observation tied)
_TIED_SPREAD = 1.0


@dataclass(frozen=True)
class KdeConfig:
    """Gaussian KDE settings for presmoothing."""

    bandwidth_rule: str = "silverman"
    bandwidth_value: Optional[float] = None
    cdf_grid_size: int = 1000

    def __post_init__(self):
        if self.bandwidth_rule not in ("silverman", "fixed"):
            raise InvalidArgumentError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if self.bandwidth_rule == "fixed" and not (
            self.bandwidth_value is not None and self.bandwidth_value > 0
        ):
            raise InvalidArgumentError("a fixed bandwidth must be positive")
        if self.cdf_grid_size < 2:
            raise InvalidArgumentError("cdf_grid_size must be at least 2")

    def bandwidth(self, sample: np.ndarray) -> float:
        if self.bandwidth_rule == "fixed":
            return float(self.bandwidth_value)
        h = silverman_bandwidth(sample)
        if h > 0:
            return h
        return 0.9 * _TIED_SPREAD * sample.size ** (-0.2)


def kde_quantile(measure: EmpiricalMeasure, cfg: KdeConfig = KdeConfig(), grid_size: int = DEFAULT_TWO_STEP_GRID) -> QuantileGrid:
    """Quantile grid of the Gaussian KDE of ``measure``.

    The KDE CDF is tabulated on ``cfg.cdf_grid_size`` equally spaced points
    spanning the data range padded by four bandwidths, inverted by linear
    interpolation, and read off at the cell midpoints ``(m - 1/2)/M``.
    """
    values = measure.values
    if values.size < MIN_UNIT_SIZE:
        raise InfeasibleUnitError(
            f"kernel density estimation needs at least {MIN_UNIT_SIZE} observations, got {values.size}"
        )
    h = cfg.bandwidth(values)
    x = np.linspace(values[0] - 4 * h, values[-1] + 4 * h, cfg.cdf_grid_size)
    cdf = ndtr((x[:, None] - values[None, :]) / h).mean(axis=1)
    probs = (np.arange(grid_size) + 0.5) / grid_size
    q = np.interp(probs, cdf, x)
    return QuantileGrid(q)


def fit_two_step(
    measures,
    covariates,
    *,
    cfg: KdeConfig = KdeConfig(),
    mode: str = "global",
    bandwidth: Optional[float] = None,
    kernel="epanechnikov",
    grid_size: int = DEFAULT_TWO_STEP_GRID,
    domain: Optional[DomainInterval] = None,
) -> RemModel:
    """Presmooth every unit with a KDE, then fit Fréchet regression.

    Units that are too small are excluded with a
    :class:`TwoStepExclusionWarning`; their indices are kept in
    ``model.excluded``.  Covariate rows of excluded units are dropped too.
    """
    cov = covariates if isinstance(covariates, CovariateSample) else CovariateSample(covariates)
    measures = [m if isinstance(m, EmpiricalMeasure) else EmpiricalMeasure(m) for m in measures]
    if len(measures) != cov.n:
        raise InvalidArgumentError(f"{len(measures)} samples for {cov.n} covariate rows")
    keep, grids, excluded = [], [], []
    for i, m in enumerate(measures):
        try:
            grids.append(kde_quantile(m, cfg, grid_size).values)
        except InfeasibleUnitError:
            excluded.append(i)
            continue
        keep.append(i)
    if excluded:
        warnings.warn(
            f"two-step presmoothing excluded {len(excluded)} unit(s) with fewer than "
            f"{MIN_UNIT_SIZE} observations",
            TwoStepExclusionWarning,
            stacklevel=2,
        )
        logger.info("two-step: excluded units %s", excluded)
    if len(keep) < 2:
        raise FitError("fewer than two units survive kernel density presmoothing")
    grids = np.stack(grids)
    if domain is not None:
        grids = np.clip(grids, domain.lower, domain.upper)
    return make_model(
        grids,
        CovariateSample(cov.z[keep]),
        mode=mode,
        bandwidth=bandwidth,
        kernel=kernel,
        grid_cap=grid_size,
        domain=domain,
        method="two-step",
        measures=[measures[i] for i in keep],
        excluded=excluded,
    )

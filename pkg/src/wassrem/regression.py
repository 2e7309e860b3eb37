"""Global and local Fréchet regression with empirical-measure responses.

Each unit's raw sample is stretched onto a common quantile grid of size
``min(lcm(N_1, ..., N_n), grid_cap)``.  A prediction at ``z`` is the
cellwise weighted average of those grids, using global (linear) or local
(kernel) Fréchet weights, followed by projection onto the set of
nondecreasing grids.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .exceptions import (
    DegenerateDesignError,
    ExtrapolationWarning,
    InsufficientLocalDataError,
    InvalidArgumentError,
    RemError,
)
from .measures import (
    DEFAULT_GRID_CAP,
    DomainInterval,
    EmpiricalMeasure,
    QuantileGrid,
    lcm_grid,
    project_to_wasserstein,
    quantile_matrix,
    weighted_quantile_mean,
)

logger = logging.getLogger(__name__)

EXTRAPOLATION_THRESHOLD = 10.0
_MIN_EIGENVALUE = 1e-10
_MAX_CONDITION = 1e12
_MIN_LOCAL_VARIANCE = 1e-12


class CovariateSample:
    """Predictor matrix with its mean and maximum-likelihood covariance.

    Parameters
    ----------
    z : array-like, shape (n,) or (n, p)
        One row per unit.  A 1-d input is a single scalar predictor.
    """

    def __init__(self, z):
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
            raise InvalidArgumentError("covariates must be an (n, p) array")
        if not np.all(np.isfinite(z)):
            raise InvalidArgumentError("covariates must be finite")
        z = z.copy()
        z.setflags(write=False)
        self.z = z
        self.mean = z.mean(axis=0)
        centered = z - self.mean
        self.covariance = centered.T @ centered / z.shape[0]
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)
        self._chol = None

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def check_design(self):
        """Raise :class:`DegenerateDesignError` unless the covariance is safely invertible."""
        if self.n < 2:
            raise DegenerateDesignError("at least two units are needed to estimate a covariance")
        eig = np.linalg.eigvalsh(self.covariance)
        if eig[0] <= _MIN_EIGENVALUE or eig[-1] / eig[0] > _MAX_CONDITION:
            raise DegenerateDesignError(
                f"covariate covariance is singular or ill-conditioned "
                f"(eigenvalues {eig[0]:.3g} .. {eig[-1]:.3g})"
            )

    def _factor(self):
        if self._chol is None:
            self.check_design()
            self._chol = linalg.cho_factor(self.covariance, lower=True)
        return self._chol

    def __repr__(self):
        return f"CovariateSample(n={self.n}, p={self.p})"


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric probability density supported on [-1, 1]."""

    family: str = "epanechnikov"

    _FAMILIES = ("epanechnikov", "triangular", "quartic")

    def __post_init__(self):
        if self.family not in self._FAMILIES:
            raise InvalidArgumentError(
                f"unknown kernel {self.family!r}; choose from {', '.join(self._FAMILIES)}"
            )

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= 1.0
        if self.family == "epanechnikov":
            k = 0.75 * (1.0 - u * u)
        elif self.family == "triangular":
            k = 1.0 - np.abs(u)
        else:
            k = 15.0 / 16.0 * (1.0 - u * u) ** 2
        return np.where(inside, k, 0.0)


def _as_kernel(kernel) -> KernelSpec:
    return kernel if isinstance(kernel, KernelSpec) else KernelSpec(str(kernel))


def _query_rows(z, p: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 0 or (z.ndim == 1 and (p > 1 or z.size == 1))
    if p == 1:
        z = z.reshape(-1, 1)
    else:
        z = np.atleast_2d(z)
    if z.shape[1] != p:
        raise InvalidArgumentError(f"query has dimension {z.shape[1]}, expected {p}")
    return z, single


def global_weights(covariates: CovariateSample, z) -> np.ndarray:
    """Global Fréchet regression weights ``1 + (Z_i - Zbar)' S^{-1} (z - Zbar)``.

    Returns shape ``(n,)`` for a single query and ``(k, n)`` for ``k``
    stacked queries.
    """
    zq, single = _query_rows(z, covariates.p)
    chol = covariates._factor()
    solved = linalg.cho_solve(chol, (zq - covariates.mean).T)  # (p, k)
    w = 1.0 + (covariates.z - covariates.mean) @ solved  # (n, k)
    w = w.T
    return w[0] if single else w


def local_weights(covariates: CovariateSample, z, bandwidth: float, kernel="epanechnikov") -> np.ndarray:
    """Local linear Fréchet regression weights for a scalar predictor.

    ``s_i = K_h(Z_i - z) [u2 - u1 (Z_i - z)] / (u0 u2 - u1^2)`` with
    ``u_j = mean(K_h(Z_i - z) (Z_i - z)^j)`` and ``K_h(t) = K(t/h)/h``.
    """
    if covariates.p != 1:
        raise InvalidArgumentError("local regression needs a scalar predictor")
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be positive")
    kernel = _as_kernel(kernel)
    zq, single = _query_rows(z, 1)
    d = covariates.z[:, 0][None, :] - zq  # (k, n)
    kh = kernel(d / bandwidth) / bandwidth
    u0 = kh.mean(axis=1)
    u1 = (kh * d).mean(axis=1)
    u2 = (kh * d * d).mean(axis=1)
    var0 = u0 * u2 - u1 * u1
    bad = ~(var0 > _MIN_LOCAL_VARIANCE)
    if np.any(bad):
        where = ", ".join(f"{v:.6g}" for v in zq[bad, 0][:5])
        raise InsufficientLocalDataError(
            f"kernel window of half-width {bandwidth:.4g} holds too little spread at z = {where}"
        )
    w = kh * (u2[:, None] - u1[:, None] * d) / var0[:, None]
    return w[0] if single else w


@dataclass(frozen=True)
class Prediction:
    z: np.ndarray
    quantiles: QuantileGrid
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class RemModel:
    """Fitted regression: per-unit quantile grids plus the weighting scheme.

    Build one with :func:`fit` (empirical measures) or
    :func:`wassrem.baseline.fit_two_step` (presmoothed grids).
    """

    covariates: CovariateSample
    grids: np.ndarray
    mode: str = "global"
    bandwidth: Optional[float] = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    grid_cap: int = DEFAULT_GRID_CAP
    domain: Optional[DomainInterval] = None
    method: str = "rem-global"
    measures: tuple = ()
    excluded: tuple = ()

    @property
    def grid_size(self) -> int:
        return self.grids.shape[1]

    @property
    def n(self) -> int:
        return self.grids.shape[0]

    def weights(self, z) -> np.ndarray:
        if self.mode == "global":
            return global_weights(self.covariates, z)
        return local_weights(self.covariates, z, self.bandwidth, self.kernel)

    def predict(self, z) -> Prediction:
        """Predicted distribution at ``z``, as a projected quantile grid."""
        w = self.weights(z)
        if w.ndim != 1:
            raise InvalidArgumentError("predict takes a single query; use predict_batch")
        return self._predict_from_weights(z, w)

    def _predict_from_weights(self, z, w) -> Prediction:
        big = float(np.max(np.abs(w)))
        if big > EXTRAPOLATION_THRESHOLD:
            warnings.warn(
                f"largest |weight| {big:.3g} exceeds {EXTRAPOLATION_THRESHOLD:g}; "
                f"query {np.ravel(z).tolist()} is far outside the covariate range",
                ExtrapolationWarning,
                stacklevel=3,
            )
        raw = weighted_quantile_mean(self.grids, w)
        q = project_to_wasserstein(raw, self.domain)
        zz = np.array(z, dtype=float)
        zz.setflags(write=False)
        w = np.array(w)
        w.setflags(write=False)
        return Prediction(z=zz, quantiles=q, weights=w)

    def predict_batch(self, zs) -> list[Union[Prediction, RemError]]:
        """Predict at every query in ``zs``.

        Queries that fail (for instance an empty local window) yield the
        raised :class:`RemError` in their slot instead of a Prediction;
        the rest of the batch is unaffected.
        """
        out: list[Union[Prediction, RemError]] = []
        for z in zs:
            try:
                out.append(self.predict(z))
            except RemError as exc:
                out.append(exc)
        return out


def _as_measures(measures, domain) -> list[EmpiricalMeasure]:
    out = []
    for m in measures:
        if isinstance(m, EmpiricalMeasure):
            out.append(m)
        else:
            out.append(EmpiricalMeasure(np.asarray(m, dtype=float), domain=domain))
    return out


def default_bandwidth(n: int) -> float:
    """``n ** (-1/5)``, the rate-optimal order for local linear smoothing."""
    return float(n) ** (-0.2)


def make_model(
    grids: np.ndarray,
    covariates,
    *,
    mode: str = "global",
    bandwidth: Optional[float] = None,
    kernel="epanechnikov",
    grid_cap: int = DEFAULT_GRID_CAP,
    domain: Optional[DomainInterval] = None,
    method: Optional[str] = None,
    measures: Sequence[EmpiricalMeasure] = (),
    excluded: Sequence = (),
) -> RemModel:
    """Validate a design and wrap precomputed ``(n, M)`` grids as a model."""
    if mode not in ("global", "local"):
        raise InvalidArgumentError(f"mode must be 'global' or 'local', got {mode!r}")
    cov = covariates if isinstance(covariates, CovariateSample) else CovariateSample(covariates)
    grids = np.asarray(grids, dtype=float)
    if grids.ndim != 2 or grids.shape[0] != cov.n:
        raise InvalidArgumentError(f"{grids.shape[0]} response grids for {cov.n} covariate rows")
    if mode == "local" and cov.p != 1:
        raise InvalidArgumentError(f"local regression needs a scalar predictor, got p={cov.p}")
    cov.check_design()
    kernel = _as_kernel(kernel)
    if mode == "local":
        if bandwidth is None:
            bandwidth = default_bandwidth(cov.n)
        if not bandwidth > 0:
            raise InvalidArgumentError("bandwidth must be positive")
        bandwidth = float(bandwidth)
    else:
        bandwidth = None
    grids = grids.copy()
    grids.setflags(write=False)
    return RemModel(
        covariates=cov,
        grids=grids,
        mode=mode,
        bandwidth=bandwidth,
        kernel=kernel,
        grid_cap=int(grid_cap),
        domain=domain,
        method=method or f"rem-{mode}",
        measures=tuple(measures),
        excluded=tuple(excluded),
    )


def fit(
    measures,
    covariates,
    *,
    mode: str = "global",
    bandwidth: Optional[float] = None,
    kernel="epanechnikov",
    grid_cap: int = DEFAULT_GRID_CAP,
    domain: Optional[DomainInterval] = None,
) -> RemModel:
    """Fit global or local REM to raw per-unit samples.

    Parameters
    ----------
    measures : sequence of EmpiricalMeasure or array-like
        One sample per unit; every sample must hold at least one value.
    covariates : CovariateSample or array-like, shape (n,) or (n, p)
    mode : {"global", "local"}
    bandwidth : float, optional
        Local mode only; defaults to ``n ** (-1/5)``.
    kernel : str or KernelSpec
        Local mode only.
    grid_cap : int
        Upper bound on the common grid size.
    domain : DomainInterval, optional
        Support constraint enforced during projection.
    """
    measures = _as_measures(measures, domain)
    if len(measures) < 2:
        raise DegenerateDesignError("at least two units are needed")
    grid_size = lcm_grid([m.size for m in measures], grid_cap)
    logger.debug("fitting %s REM on %d units, grid size %d", mode, len(measures), grid_size)
    return make_model(
        quantile_matrix(measures, grid_size),
        covariates,
        mode=mode,
        bandwidth=bandwidth,
        kernel=kernel,
        grid_cap=grid_cap,
        domain=domain,
        measures=measures,
    )


def predict(model: RemModel, z) -> Prediction:
    return model.predict(z)


def predict_batch(model: RemModel, zs) -> list:
    return model.predict_batch(zs)


def prediction_function(model: RemModel) -> Callable[[float], QuantileGrid]:
    """``z -> predicted QuantileGrid``, convenient for error integrals."""
    return lambda z: model.predict(z).quantiles

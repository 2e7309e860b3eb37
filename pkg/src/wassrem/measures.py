"""One-dimensional Wasserstein geometry on discretized quantile functions.

All arithmetic happens on :class:`QuantileGrid` objects: step quantile
functions on ``M`` equal-probability cells, cell ``m`` (1-based) covering
``((m - 1)/M, m/M]``.  On a shared grid the 2-Wasserstein distance is the
exact L2 distance between step functions, and the Fréchet mean of a set of
measures is the cellwise mean of their grids.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .exceptions import GridCapWarning, GridMismatchError, InvalidArgumentError

DEFAULT_GRID_CAP = 5000

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DomainInterval:
    """Closed interval ``[lower, upper]`` holding the support of all measures."""

    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InvalidArgumentError("domain bounds must be finite")
        if not lo < hi:
            raise InvalidArgumentError(f"domain lower bound {lo} must be below upper bound {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, values) -> bool:
        values = np.asarray(values)
        return bool(np.all((values >= self.lower) & (values <= self.upper)))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform discrete measure on a unit's raw observations.

    The observations are sorted on construction (stable sort, so ties keep
    their input order).
    """

    values: np.ndarray
    domain: Optional[DomainInterval] = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).ravel()
        if arr.size < 1:
            raise InvalidArgumentError("an empirical measure needs at least one observation")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("observations must be finite")
        arr = np.sort(arr, kind="stable")
        if self.domain is not None and not self.domain.contains(arr):
            raise InvalidArgumentError(
                f"observations fall outside the domain [{self.domain.lower}, {self.domain.upper}]"
            )
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def size(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class QuantileGrid:
    """Step quantile function on ``grid_size`` equal-probability cells."""

    values: np.ndarray
    domain: Optional[DomainInterval] = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).ravel()
        if arr.size < 1:
            raise InvalidArgumentError("a quantile grid needs at least one cell")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("quantile values must be finite")
        if np.any(np.diff(arr) < 0):
            raise InvalidArgumentError("quantile values must be nondecreasing")
        if self.domain is not None and not self.domain.contains(arr):
            raise InvalidArgumentError("quantile values fall outside the declared domain")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def grid_size(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.grid_size

    def cell_midpoints(self) -> np.ndarray:
        """Probability levels at the centre of each cell."""
        return (np.arange(self.grid_size) + 0.5) / self.grid_size


@dataclass(frozen=True)
class DensityCurve:
    """Density values ``f`` on a strictly increasing abscissa ``x``."""

    x: np.ndarray
    f: np.ndarray
    bandwidth: float = float("nan")
    degenerate: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if x.shape != f.shape or x.ndim != 1:
            raise InvalidArgumentError("x and f must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise InvalidArgumentError("abscissa must be strictly increasing")
        if np.any(f < 0):
            raise InvalidArgumentError("densities must be nonnegative")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "f", _frozen(f))

    def integral(self) -> float:
        return float(_trapezoid(self.f, self.x))


def stretch(sorted_values: np.ndarray, grid_size: int) -> np.ndarray:
    """Spread a sorted sample over ``grid_size`` cells.

    Cell ``m`` takes ``values[ceil(N*m/M) - 1]``, the left-continuous
    empirical quantile at ``m/M``.  When ``N`` divides ``M`` this is every
    observation repeated ``M/N`` times.
    """
    n = sorted_values.shape[-1]
    m = np.arange(1, grid_size + 1, dtype=np.int64)
    idx = (n * m + grid_size - 1) // grid_size - 1
    return sorted_values[..., idx]


def empirical_quantile(measure: EmpiricalMeasure, grid_size: int) -> QuantileGrid:
    """Discretize the quantile function of ``measure`` on ``grid_size`` cells."""
    grid_size = _positive_int(grid_size, "grid_size")
    return QuantileGrid(stretch(measure.values, grid_size), domain=measure.domain)


def wasserstein_distance(a: QuantileGrid, b: QuantileGrid) -> float:
    """Exact 2-Wasserstein distance between two step quantile functions.

    Both grids must have the same number of cells; align them with
    :func:`lcm_grid` and :func:`empirical_quantile` first.
    """
    av = a.values if isinstance(a, QuantileGrid) else np.asarray(a, dtype=float)
    bv = b.values if isinstance(b, QuantileGrid) else np.asarray(b, dtype=float)
    if av.shape != bv.shape:
        raise GridMismatchError(f"grid sizes differ: {av.size} vs {bv.size}")
    return float(np.sqrt(np.mean((av - bv) ** 2)))


def lcm_grid(sizes: Iterable[int], cap: int = DEFAULT_GRID_CAP) -> int:
    """Least common multiple of the sample sizes, clipped at ``cap``.

    Accumulation stops as soon as the running lcm passes ``cap``, so huge
    intermediate integers are never formed.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InvalidArgumentError("lcm_grid needs at least one sample size")
    if any(s < 1 for s in sizes):
        raise InvalidArgumentError("sample sizes must be positive")
    cap = _positive_int(cap, "cap")
    if cap < max(sizes):
        warnings.warn(
            f"grid cap {cap} is below the largest sample size {max(sizes)}; "
            "quantiles will be stretched inexactly",
            GridCapWarning,
            stacklevel=2,
        )
    acc = 1
    for s in sorted(set(sizes)):
        acc = math.lcm(acc, s)
        if acc > cap:
            return cap
    return acc


def weighted_quantile_mean(grids, weights) -> np.ndarray:
    """Cellwise weighted average ``(1/n) sum_i w_i * grid_i``.

    ``grids`` is a sequence of :class:`QuantileGrid` or an ``(n, M)`` array.
    The result need not be monotone when some weights are negative.
    """
    mat = _as_matrix(grids)
    w = np.asarray(weights, dtype=float).ravel()
    if w.size != mat.shape[0]:
        raise InvalidArgumentError(f"{w.size} weights for {mat.shape[0]} grids")
    if abs(w.mean() - 1.0) > 1e-10:
        raise InvalidArgumentError(f"weights must average to 1, got mean {w.mean():.3g}")
    return (w @ mat) / w.size


def pava(v) -> np.ndarray:
    """Least-squares nondecreasing fit to ``v`` (pool adjacent violators).

    Equal weights.  Blocks are merged while the previous block mean exceeds
    the current one, so the output is exactly monotone in floating point.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size < 2 or not np.any(np.diff(v) < 0):
        return v.copy()
    means: list[float] = []
    counts: list[int] = []
    totals: list[float] = []
    for x in v.tolist():
        total, count = x, 1
        mean = x
        while means and means[-1] > mean:
            total += totals.pop()
            count += counts.pop()
            means.pop()
            mean = total / count
        means.append(mean)
        counts.append(count)
        totals.append(total)
    return np.repeat(np.array(means), counts)


def project_to_wasserstein(v, domain: Optional[DomainInterval] = None) -> QuantileGrid:
    """Closest quantile grid to ``v`` in squared L2 distance.

    Solves ``min sum (q_m - v_m)^2`` over nondecreasing ``q`` with every
    entry in ``domain`` when one is given.  For a box that is the same for
    every coordinate, clipping the isotonic fit is exact.
    """
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("cannot project non-finite values")
    q = pava(v)
    if domain is not None:
        q = np.clip(q, domain.lower, domain.upper)
    return QuantileGrid(q, domain=domain)


def barycenter(
    measures: Sequence[EmpiricalMeasure],
    cap: int = DEFAULT_GRID_CAP,
    domain: Optional[DomainInterval] = None,
) -> QuantileGrid:
    """Equal-weight Wasserstein barycenter of empirical measures."""
    if len(measures) == 0:
        raise InvalidArgumentError("barycenter of an empty collection")
    grid_size = lcm_grid([m.size for m in measures], cap)
    mat = quantile_matrix(measures, grid_size)
    # same reduction as a weighted prediction with unit weights, bit for bit
    return project_to_wasserstein(weighted_quantile_mean(mat, np.ones(len(measures))), domain)


def silverman_bandwidth(sample: np.ndarray, n_eff: Optional[int] = None) -> float:
    """Gaussian rule-of-thumb bandwidth ``0.9 * min(sd, IQR/1.34) * n**-0.2``.

    Falls back to whichever spread measure is positive; returns 0 for a
    constant sample.
    """
    sample = np.asarray(sample, dtype=float)
    n = sample.size if n_eff is None else n_eff
    sd = float(np.std(sample))
    q75, q25 = np.percentile(sample, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    return 0.9 * spread * n ** (-0.2)


def quantile_to_density(
    q: QuantileGrid, bandwidth: Optional[float] = None, n_points: int = 512
) -> DensityCurve:
    """Convert a quantile grid into a density curve for display.

    The CDF implied by ``q`` (cell values paired with cell midpoint
    probabilities) is smoothed by local linear regression with an
    Epanechnikov kernel of half-width ``bandwidth``; the fitted slope is the
    density.  The result is clipped at zero and rescaled to integrate to
    one over ``[q_1, q_M]``.

    When ``bandwidth`` is None, a Silverman rule on the distinct quantile
    values is used, widened by sqrt(5) to match the Epanechnikov kernel's
    standard deviation.
    """
    values = q.values if isinstance(q, QuantileGrid) else np.asarray(q, dtype=float)
    if np.any(np.diff(values) < 0):
        raise InvalidArgumentError("quantile values must be nondecreasing")
    n_points = _positive_int(n_points, "n_points")
    lo, hi = float(values[0]), float(values[-1])
    if hi <= lo:
        half = max(abs(lo), 1.0) * 1e-6
        x = np.linspace(lo - half, lo + half, max(n_points, 3))
        f = np.maximum(0.0, 1.0 - np.abs(x - lo) / half) / half
        return DensityCurve(x, f, bandwidth=half, degenerate=True)

    if bandwidth is None:
        n_distinct = int(np.unique(values).size)
        bandwidth = math.sqrt(5.0) * silverman_bandwidth(values, n_eff=n_distinct)
    bandwidth = float(bandwidth)
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be positive")

    probs = (np.arange(values.size) + 0.5) / values.size
    x = np.linspace(lo, hi, n_points)
    u = (values[None, :] - x[:, None]) / bandwidth
    w = np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)
    sw = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        xbar = (w @ values) / sw
        pbar = (w @ probs) / sw
        dx = values[None, :] - xbar[:, None]
        sxx = np.einsum("ij,ij->i", w, dx * dx)
        sxp = np.einsum("ij,ij->i", w * dx, probs[None, :] - pbar[:, None])
        f = sxp / sxx
    f = np.where(np.isfinite(f) & (sxx > 0), f, 0.0)
    f = np.maximum(f, 0.0)
    total = float(_trapezoid(f, x))
    if not total > 0:
        raise InvalidArgumentError(
            f"bandwidth {bandwidth:.3g} is too small to estimate a density from this grid"
        )
    return DensityCurve(x, f / total, bandwidth=bandwidth)


def quantile_matrix(measures: Sequence[EmpiricalMeasure], grid_size: int) -> np.ndarray:
    """Stack the stretched grids of ``measures`` into an ``(n, M)`` array."""
    out = np.empty((len(measures), grid_size))
    for i, m in enumerate(measures):
        out[i] = stretch(m.values, grid_size)
    return out


def _as_matrix(grids) -> np.ndarray:
    if isinstance(grids, np.ndarray):
        mat = np.atleast_2d(grids).astype(float, copy=False)
    else:
        rows = [g.values if isinstance(g, QuantileGrid) else np.asarray(g, float) for g in grids]
        if not rows:
            raise InvalidArgumentError("no grids given")
        sizes = {r.size for r in rows}
        if len(sizes) != 1:
            raise GridMismatchError(f"grids have different sizes: {sorted(sizes)}")
        mat = np.stack(rows)
    return mat


def _positive_int(value, name: str) -> int:
    if int(value) != value or int(value) < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
    return int(value)

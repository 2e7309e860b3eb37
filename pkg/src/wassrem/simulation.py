"""Monte Carlo study of REM against the two-step baseline.

Four generative settings.  In every one the unit-level distribution is
Gaussian with random mean ``eta`` and random standard deviation ``sigma``
drawn given the predictor ``Z ~ U(-1, 1)``:

* I   ``E(eta|Z) = eta0 + alpha Z``,         ``E(sigma|Z) = sigma0 + beta Z``
* II  ``E(eta|Z) = eta0 + alpha sin(pi Z)``, ``E(sigma|Z) = sigma0 + beta sin(pi Z)``
* III as I, then each unit is pushed through a random map ``T_k``
* IV  as II, then each unit is pushed through a random map ``T_k``

with ``eta|Z ~ N(E(eta|Z), tau^2)``,
``sigma|Z ~ Gamma(shape=E(sigma|Z)^2/kappa, scale=kappa/E(sigma|Z))`` and
``T_k(x) = x - sin(k x)/|k|`` for ``k`` uniform on {-2, -1, 1, 2}.  The maps
average to the identity, so the true regression function of III/IV equals
that of I/II: the Gaussian quantile function
``E(eta|z) + E(sigma|z) * Phi^{-1}``.

Reproducibility
---------------
Run ``q`` at size ``n`` draws from
``numpy.random.default_rng(SeedSequence(master_seed, spawn_key=(n, q)))``
(PCG64).  Gamma variates come from ``Generator.gamma`` (Marsaglia-Tsang
squeeze method), Poisson counts from ``Generator.poisson``.  Per-unit
draws happen in a fixed order: all ``Z``, then for each unit ``N``,
``eta``, ``sigma``, ``N`` uniforms, and finally ``k`` (III/IV only).
Results therefore do not depend on how runs are spread over workers.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .baseline import KdeConfig, fit_two_step
from .exceptions import ExtrapolationWarning, InvalidArgumentError, RemError, SimulationError
from .measures import DEFAULT_GRID_CAP, EmpiricalMeasure, QuantileGrid, wasserstein_distance
from .regression import RemModel, default_bandwidth, fit

logger = logging.getLogger(__name__)

SETTINGS = ("I", "II", "III", "IV")
TRANSPORT_KS = (-2, -1, 1, 2)
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class SimulationParams:
    eta0: float = 0.0
    sigma0: float = 3.0
    alpha: float = 3.0
    beta: float = 0.5
    tau: float = 0.5
    kappa: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise InvalidArgumentError("tau must be nonnegative")
        if not self.kappa > 0:
            raise InvalidArgumentError("kappa must be positive")
        # sd mean is sigma0 + beta*g(z) with |g| <= 1 on [-1, 1]
        if not self.sigma0 - abs(self.beta) > 0:
            raise InvalidArgumentError("sigma0 + beta*g(z) must stay positive on [-1, 1]")


def _check_setting(setting: str) -> str:
    setting = str(setting).upper()
    if setting not in SETTINGS:
        raise InvalidArgumentError(f"unknown setting {setting!r}; choose from {', '.join(SETTINGS)}")
    return setting


def is_local_setting(setting: str) -> bool:
    return _check_setting(setting) in ("II", "IV")


def is_transported(setting: str) -> bool:
    return _check_setting(setting) in ("III", "IV")


def _link(setting: str, z):
    z = np.asarray(z, dtype=float)
    return np.sin(np.pi * z) if is_local_setting(setting) else z


def mean_fn(setting: str, params: SimulationParams, z):
    """``E(eta | Z = z)``."""
    return params.eta0 + params.alpha * _link(setting, z)


def sd_fn(setting: str, params: SimulationParams, z):
    """``E(sigma | Z = z)``."""
    return params.sigma0 + params.beta * _link(setting, z)


def transport_map(k: int, x):
    """``T_k(x) = x - sin(k x) / |k|``; nondecreasing for every k != 0."""
    if k == 0:
        raise InvalidArgumentError("transport index k must be nonzero")
    x = np.asarray(x, dtype=float)
    return x - np.sin(k * x) / abs(k)


@lru_cache(maxsize=16)
def _normal_midpoint_quantiles(grid_size: int) -> np.ndarray:
    out = ndtri((np.arange(grid_size) + 0.5) / grid_size)
    out.setflags(write=False)
    return out


def true_quantile(setting: str, params: SimulationParams, z: float, grid_size: int = 1000) -> QuantileGrid:
    """True regression function at ``z``, Gaussian quantiles at cell midpoints."""
    setting = _check_setting(setting)
    if not -1.0 <= z <= 1.0:
        raise InvalidArgumentError(f"z = {z} lies outside [-1, 1]")
    sd = float(sd_fn(setting, params, z))
    if not sd > 0:
        raise InvalidArgumentError(f"standard deviation {sd} is not positive")
    mu = float(mean_fn(setting, params, z))
    return QuantileGrid(mu + sd * _normal_midpoint_quantiles(grid_size))


def true_quantile_matrix(setting: str, params: SimulationParams, zs, grid_size: int) -> np.ndarray:
    zs = np.asarray(zs, dtype=float)
    mu = mean_fn(setting, params, zs)
    sd = sd_fn(setting, params, zs)
    return mu[:, None] + sd[:, None] * _normal_midpoint_quantiles(grid_size)[None, :]


@dataclass(frozen=True)
class UnitDraw:
    """Latent parameters behind one simulated unit."""

    z: float
    eta: float
    sigma: float
    n_obs: int
    k: Optional[int] = None


def sample_unit(
    setting: str,
    params: SimulationParams,
    z: float,
    rng: np.random.Generator,
    rate: float,
    n_obs: Optional[int] = None,
    k: Optional[int] = None,
) -> tuple[Optional[EmpiricalMeasure], UnitDraw]:
    """Draw one unit's sample at predictor value ``z``.

    ``N ~ Poisson(rate)`` unless ``n_obs`` is given; ``k`` forces the
    transport map in settings III/IV.  Returns ``None`` in place of the
    measure when ``N == 0``.
    """
    setting = _check_setting(setting)
    n_draw = rng.poisson(rate)
    n_obs = int(n_draw if n_obs is None else n_obs)
    mu = float(mean_fn(setting, params, z))
    sd = float(sd_fn(setting, params, z))
    eta = rng.normal(mu, params.tau) if params.tau > 0 else mu
    sigma = rng.gamma(sd * sd / params.kappa, params.kappa / sd)
    u = rng.random(n_obs)
    y = eta + sigma * ndtri(u)
    if is_transported(setting):
        k_draw = TRANSPORT_KS[rng.integers(len(TRANSPORT_KS))]
        k = k_draw if k is None else k
        y = transport_map(k, y)
    else:
        k = None
    draw = UnitDraw(z=float(z), eta=float(eta), sigma=float(sigma), n_obs=n_obs, k=k)
    return (EmpiricalMeasure(y) if n_obs > 0 else None), draw


@dataclass
class SimulatedData:
    z: np.ndarray
    measures: list  # EmpiricalMeasure, or None for an empty unit
    draws: list

    def nonempty(self) -> tuple[np.ndarray, list]:
        keep = [i for i, m in enumerate(self.measures) if m is not None]
        return self.z[keep], [self.measures[i] for i in keep]


def simulate_dataset(
    setting: str,
    params: SimulationParams,
    n: int,
    rng: np.random.Generator,
    lambda_rate: float = 0.25,
    forced_sizes: Optional[dict] = None,
    unit_rates: Optional[Sequence[float]] = None,
) -> SimulatedData:
    """Draw ``n`` units with ``Z ~ U(-1, 1)`` and ``N_i ~ Poisson(c_i * lambda_rate * n)``.

    ``unit_rates`` holds the optional multipliers ``c_i`` (default 1);
    ``forced_sizes`` maps unit index to a fixed sample size.
    """
    forced_sizes = forced_sizes or {}
    z = rng.uniform(-1.0, 1.0, n)
    measures, draws = [], []
    for i in range(n):
        c = 1.0 if unit_rates is None else float(unit_rates[i])
        m, d = sample_unit(setting, params, z[i], rng, c * lambda_rate * n, n_obs=forced_sizes.get(i))
        measures.append(m)
        draws.append(d)
    return SimulatedData(z=z, measures=measures, draws=draws)


def query_grid(points: int = 100, lower: float = -1.0, upper: float = 1.0) -> np.ndarray:
    """Midpoints of ``points`` equal cells on ``[lower, upper]``."""
    return lower + (np.arange(points) + 0.5) * (upper - lower) / points


def ise(
    fitted: Callable[[float], QuantileGrid],
    truth: Callable[[float], QuantileGrid],
    grid=None,
    lower: float = -1.0,
    upper: float = 1.0,
) -> float:
    """Midpoint-rule integral of ``d_W^2(fitted(z), truth(z))`` over ``grid``."""
    grid = query_grid() if grid is None else np.asarray(grid, dtype=float)
    step = (upper - lower) / grid.size
    return float(sum(wasserstein_distance(fitted(z), truth(z)) ** 2 for z in grid) * step)


def _model_ise(model: RemModel, truth: np.ndarray, grid: np.ndarray, step: float) -> float:
    total = 0.0
    for z, t in zip(grid, truth):
        q = model.predict(z).quantiles.values
        total += float(np.mean((q - t) ** 2))
    return total * step


@dataclass(frozen=True)
class SimulationScenario:
    """Everything needed to reproduce a study.

    ``rem_mode`` defaults to global for settings I/III and local for II/IV.
    ``compare_modes`` additionally fits REM in the other mode on the same
    data (reported as ``ise_rem_other``).
    """

    setting: str = "I"
    n_ladder: tuple = (50, 100, 200)
    runs: int = 200
    master_seed: int = 0
    lambda_rate: float = 0.25
    params: SimulationParams = field(default_factory=SimulationParams)
    query_points: int = 100
    grid_cap: int = DEFAULT_GRID_CAP
    two_step: bool = True
    two_step_grid: int = 500
    kde: KdeConfig = field(default_factory=KdeConfig)
    rem_mode: Optional[str] = None
    compare_modes: bool = False

    def __post_init__(self):
        object.__setattr__(self, "setting", _check_setting(self.setting))
        ladder = (self.n_ladder,) if isinstance(self.n_ladder, int) else tuple(int(n) for n in self.n_ladder)
        if not ladder or min(ladder) < 2:
            raise InvalidArgumentError("every n in the ladder must be at least 2")
        object.__setattr__(self, "n_ladder", ladder)
        if self.runs < 1:
            raise InvalidArgumentError("runs must be at least 1")
        if not self.lambda_rate > 0:
            raise InvalidArgumentError("lambda_rate must be positive")
        if self.rem_mode not in (None, "global", "local"):
            raise InvalidArgumentError("rem_mode must be 'global' or 'local'")

    @property
    def mode(self) -> str:
        if self.rem_mode is not None:
            return self.rem_mode
        return "local" if is_local_setting(self.setting) else "global"


@dataclass(frozen=True)
class RunResult:
    run_index: int
    n: int
    setting: str
    ise_rem: Optional[float]
    ise_two_step: Optional[float]
    ise_rem_other: Optional[float] = None
    empty_units: int = 0
    two_step_excluded: int = 0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return asdict(self)


def run_seed(master_seed: int, n: int, run_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(n), int(run_index)))


def run_once(scenario: SimulationScenario, n: int, run_index: int) -> RunResult:
    """One Monte Carlo replicate; never raises for estimation failures."""
    rng = np.random.default_rng(run_seed(scenario.master_seed, n, run_index))
    data = simulate_dataset(scenario.setting, scenario.params, n, rng, scenario.lambda_rate)
    z, measures = data.nonempty()
    empty = n - len(measures)
    grid = query_grid(scenario.query_points)
    step = 2.0 / grid.size
    mode = scenario.mode
    bandwidth = default_bandwidth(n)
    base = dict(run_index=run_index, n=n, setting=scenario.setting, empty_units=empty)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        try:
            model = fit(measures, z, mode=mode, bandwidth=bandwidth, grid_cap=scenario.grid_cap)
            truth = true_quantile_matrix(scenario.setting, scenario.params, grid, model.grid_size)
            ise_rem = _model_ise(model, truth, grid, step)
            ise_other = None
            if scenario.compare_modes:
                other = "global" if mode == "local" else "local"
                alt = fit(measures, z, mode=other, bandwidth=bandwidth, grid_cap=scenario.grid_cap)
                ise_other = _model_ise(alt, truth, grid, step)
        except (RemError, np.linalg.LinAlgError) as exc:
            return RunResult(ise_rem=None, ise_two_step=None, error=f"{type(exc).__name__}: {exc}", **base)

        ise_two, excluded = None, 0
        if scenario.two_step:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    ts = fit_two_step(
                        measures, z, cfg=scenario.kde, mode=mode, bandwidth=bandwidth,
                        grid_size=scenario.two_step_grid,
                    )
                excluded = len(ts.excluded)
                truth_ts = true_quantile_matrix(scenario.setting, scenario.params, grid, ts.grid_size)
                ise_two = _model_ise(ts, truth_ts, grid, step)
            except RemError as exc:
                logger.info("run %d (n=%d): two-step infeasible: %s", run_index, n, exc)
    return RunResult(
        ise_rem=ise_rem, ise_two_step=ise_two, ise_rem_other=ise_other,
        two_step_excluded=excluded, **base,
    )


def _run_task(args):
    scenario, n, q = args
    return run_once(scenario, n, q)


@dataclass
class StudyResult:
    scenario: SimulationScenario
    runs: list
    summary: dict


def _stats(values: list) -> Optional[dict]:
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return None
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    return {
        "count": int(arr.size),
        "mean": float(arr.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
    }


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def summarize(runs: Sequence[RunResult], ladder: Sequence[int]) -> dict:
    """Per-method, per-n ISE statistics and log-log slopes of mean and median ISE."""
    methods = {
        "rem": lambda r: r.ise_rem,
        "two-step": lambda r: r.ise_two_step,
        "rem-other-mode": lambda r: r.ise_rem_other,
    }
    table: dict = {}
    for name, get in methods.items():
        per_n = {}
        for n in ladder:
            stats = _stats([get(r) for r in runs if r.n == n and not r.failed])
            if stats is not None:
                per_n[str(n)] = stats
        if not per_n:
            continue
        entry = {"by_n": per_n}
        if len(per_n) >= 2:
            ns = [int(k) for k in per_n]
            entry["slope_mean"] = loglog_slope(ns, [per_n[str(k)]["mean"] for k in ns])
            entry["slope_median"] = loglog_slope(ns, [per_n[str(k)]["median"] for k in ns])
        table[name] = entry
    failures = {str(n): sum(1 for r in runs if r.n == n and r.failed) for n in ladder}
    return {"methods": table, "failures": failures}


def run_study(scenario: SimulationScenario, workers: int = 1) -> StudyResult:
    """Run every ``(n, run)`` replicate of ``scenario`` and summarize.

    Replicates are independent and seeded individually, so the result is
    identical for any ``workers``.  Raises :class:`SimulationError` when
    more than 10% of the runs at some ``n`` fail.
    """
    tasks = [(scenario, n, q) for n in scenario.n_ladder for q in range(scenario.runs)]
    if workers <= 1:
        runs = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    runs.sort(key=lambda r: (r.n, r.run_index))
    for n in scenario.n_ladder:
        failed = [r for r in runs if r.n == n and r.failed]
        if len(failed) > MAX_FAILURE_FRACTION * scenario.runs:
            raise SimulationError(
                f"{len(failed)} of {scenario.runs} runs failed at n={n}; first error: {failed[0].error}"
            )
    return StudyResult(scenario=scenario, runs=runs, summary=summarize(runs, scenario.n_ladder))


@dataclass(frozen=True)
class SparseUnitOutcome:
    unit_index: int
    z: float
    rem_distance: float
    two_step_excluded: bool


def sparse_unit_recovery(
    n: int = 200,
    seed: int = 0,
    setting: str = "I",
    params: SimulationParams = SimulationParams(),
    lambda_rate: float = 0.25,
    unit_index: int = 0,
    grid_cap: int = DEFAULT_GRID_CAP,
) -> SparseUnitOutcome:
    """Force one unit to a single observation and check how well REM recovers it.

    Returns the Wasserstein distance between the REM prediction at that
    unit's predictor value and the true regression function there, and
    whether the two-step baseline had to drop the unit.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    data = simulate_dataset(setting, params, n, rng, lambda_rate, forced_sizes={unit_index: 1})
    keep = [i for i, m in enumerate(data.measures) if m is not None]
    z = data.z[keep]
    measures = [data.measures[i] for i in keep]
    pos = keep.index(unit_index)
    mode = "local" if is_local_setting(setting) else "global"
    model = fit(measures, z, mode=mode, grid_cap=grid_cap)
    z0 = float(data.z[unit_index])
    pred = model.predict(z0).quantiles
    truth = true_quantile(setting, params, z0, pred.grid_size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ts = fit_two_step(measures, z, mode=mode)
    return SparseUnitOutcome(
        unit_index=unit_index,
        z=z0,
        rem_distance=wasserstein_distance(pred, truth),
        two_step_excluded=pos in ts.excluded,
    )

"""Command-line entry point: ``wassrem {fit-predict,barycenter,simulate}``.

Errors are printed to stderr as one JSON object
``{"error": <code>, "message": <text>}`` with exit status 1 (2 for usage
errors).  Log verbosity follows the ``REM_LOG`` environment variable
(DEBUG, INFO, WARNING, ...; default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import dataio
from .baseline import KdeConfig, fit_two_step
from .exceptions import InvalidArgumentError, RemError, RemWarning
from .measures import DEFAULT_GRID_CAP, DomainInterval, barycenter, quantile_to_density
from .regression import fit
from .simulation import SimulationScenario, run_study

logger = logging.getLogger("wassrem")

EXIT_ERROR = 1
EXIT_USAGE = 2


class UsageError(RemError):
    code = "usage-error"


def _domain(text):
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--domain expects 'lo,hi', got {text!r}") from None
    return DomainInterval(lo, hi)


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def parse_queries(text: str, p: int) -> list:
    """Queries from a file path or an inline list.

    Scalar predictors: ``"3,5"`` or ``"3;5"``.  Vector predictors: points
    separated by ``;`` with comma-separated coordinates, ``"1,2;3,4"``.
    A file holds one query per line, coordinates comma-separated.
    """
    if os.path.isfile(text):
        with open(text, encoding="utf-8") as fh:
            chunks = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    elif p == 1:
        chunks = [c for c in text.replace(";", ",").split(",") if c.strip()]
    else:
        chunks = [c for c in text.split(";") if c.strip()]
    queries = []
    for c in chunks:
        try:
            q = [float(v) for v in c.split(",")]
        except ValueError:
            raise UsageError(f"cannot parse query {c!r}") from None
        if len(q) != p:
            raise UsageError(f"query {c!r} has {len(q)} coordinates, expected {p}")
        queries.append(q)
    if not queries:
        raise UsageError("no queries given")
    return queries


def _density(grid, args):
    if not args.density:
        return None
    curve = quantile_to_density(grid, bandwidth=args.density_bandwidth)
    return {"x": curve.x, "f": curve.f, "bandwidth": curve.bandwidth, "degenerate": curve.degenerate}


def _warning_codes(caught) -> list:
    codes = []
    for w in caught:
        code = getattr(w.category, "code", None)
        if code is not None and code not in codes:
            codes.append(code)
        logger.warning("%s", w.message)
    return codes


def _emit(records, args):
    text = dataio.records_to_json(records) if args.format == "json" else dataio.records_to_csv(records)
    dataio.write_text(args.out, text)


def cmd_fit_predict(args) -> int:
    with warnings.catch_warnings(record=True) as ingest_caught:
        warnings.simplefilter("always", RemWarning)
        data = dataio.ingest(args.observations, args.units)
    ingest_codes = _warning_codes(ingest_caught)
    if args.method == "local" and data.p != 1:
        raise UsageError(f"--method local needs exactly one covariate column, found {data.p}")
    domain = _domain(args.domain)
    queries = parse_queries(args.queries, data.p)
    measures = data.measures(domain)

    with warnings.catch_warnings(record=True) as fit_caught:
        warnings.simplefilter("always", RemWarning)
        if args.method == "two-step":
            cfg = KdeConfig() if args.kde_bandwidth is None else KdeConfig("fixed", args.kde_bandwidth)
            model = fit_two_step(
                measures, data.z, cfg=cfg, mode=args.two_step_mode, bandwidth=args.bandwidth,
                kernel=args.kernel, grid_size=args.two_step_grid, domain=domain,
            )
        else:
            model = fit(
                measures, data.z, mode=args.method, bandwidth=args.bandwidth,
                kernel=args.kernel, grid_cap=args.grid_cap, domain=domain,
            )
    fit_codes = _warning_codes(fit_caught)
    excluded_ids = list(data.excluded) + [data.unit_ids[i] for i in model.excluded]

    records = []
    for q in queries:
        z = q[0] if data.p == 1 else np.array(q)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RemWarning)
            pred = model.predict(z)
        codes = ingest_codes + fit_codes + _warning_codes(caught)
        diag = {
            "n_units": model.n,
            "weight_min": float(pred.weights.min()),
            "weight_max": float(pred.weights.max()),
            "excluded_units": len(excluded_ids),
            "excluded_unit_ids": excluded_ids,
            "bandwidth": model.bandwidth,
            "warnings": sorted(set(codes)),
        }
        records.append(
            dataio.OutputRecord(
                query=q, method=model.method, quantiles=pred.quantiles.values,
                density=_density(pred.quantiles, args), diagnostics=diag,
            )
        )
    _emit(records, args)
    return 0


def cmd_barycenter(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RemWarning)
        data = dataio.ingest(args.observations, args.units)
        if data.n == 0:
            raise InvalidArgumentError("dataset has no units with observations")
        domain = _domain(args.domain)
        grid = barycenter(data.measures(domain), cap=args.grid_cap, domain=domain)
    diag = {
        "n_units": data.n,
        "excluded_units": len(data.excluded),
        "excluded_unit_ids": list(data.excluded),
        "warnings": sorted(set(_warning_codes(caught))),
    }
    record = dataio.OutputRecord(
        query=None, method="barycenter", quantiles=grid.values,
        density=_density(grid, args), diagnostics=diag,
    )
    _emit([record], args)
    return 0


def cmd_simulate(args) -> int:
    scenario = SimulationScenario(
        setting=args.setting,
        n_ladder=_int_list(args.n_ladder),
        runs=args.runs,
        master_seed=args.seed,
        lambda_rate=args.lambda_rate,
        grid_cap=args.grid_cap,
        query_points=args.query_points,
        two_step=not args.no_two_step,
        rem_mode=args.rem_mode,
        compare_modes=args.compare_modes,
    )
    result = run_study(scenario, workers=args.workers)
    paths = dataio.write_study(result, args.out_dir)
    sys.stdout.write(dataio.summary_table_csv(result.summary))
    logger.info("wrote %s", ", ".join(paths.values()))
    return 0


class _Parser(argparse.ArgumentParser):
    # argument errors become JSON usage errors instead of argparse's text
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wassrem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, units_required=True):
        p.add_argument("--observations", required=True, help="CSV with header unit_id,y")
        p.add_argument("--units", required=units_required, help="CSV with header unit_id,z1[,z2,...]")
        p.add_argument("--domain", help="support interval 'lo,hi' enforced in projection")
        p.add_argument("--grid-cap", type=int, default=DEFAULT_GRID_CAP)
        p.add_argument("--density", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--density-bandwidth", type=float)
        p.add_argument("--out", default="-", help="output path ('-' for stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; fitting is deterministic")

    fp = sub.add_parser("fit-predict", help="fit REM or the two-step baseline and predict at queries")
    data_args(fp)
    fp.add_argument("--method", choices=("global", "local", "two-step"), default="global")
    fp.add_argument("--queries", required=True, help="file, or inline list such as '3,5' or '1,2;3,4'")
    fp.add_argument("--bandwidth", type=float, help="local bandwidth (default n^(-1/5))")
    fp.add_argument("--kernel", choices=("epanechnikov", "triangular", "quartic"), default="epanechnikov")
    fp.add_argument("--two-step-mode", choices=("global", "local"), default="global")
    fp.add_argument("--two-step-grid", type=int, default=500)
    fp.add_argument("--kde-bandwidth", type=float, help="fixed KDE bandwidth (default Silverman)")
    fp.set_defaults(func=cmd_fit_predict)

    bp = sub.add_parser("barycenter", help="equal-weight Wasserstein barycenter of all units")
    data_args(bp, units_required=False)
    bp.set_defaults(func=cmd_barycenter)

    sp = sub.add_parser("simulate", help="Monte Carlo comparison of REM and the two-step baseline")
    sp.add_argument("--setting", choices=("I", "II", "III", "IV"), required=True)
    sp.add_argument("--n-ladder", default="50,100,200")
    sp.add_argument("--runs", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--lambda-rate", type=float, default=0.25)
    sp.add_argument("--grid-cap", type=int, default=DEFAULT_GRID_CAP)
    sp.add_argument("--query-points", type=int, default=100)
    sp.add_argument("--rem-mode", choices=("global", "local"))
    sp.add_argument("--compare-modes", action="store_true", help="also fit REM in the other mode")
    sp.add_argument("--no-two-step", action="store_true")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return status


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("REM_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        return args.func(args)
    except UsageError as exc:
        return _fail(exc.code, str(exc), EXIT_USAGE)
    except RemError as exc:
        return _fail(exc.code, str(exc), EXIT_ERROR)
    except OSError as exc:
        return _fail("io-error", str(exc), EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())

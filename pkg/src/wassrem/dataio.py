"""CSV ingestion and serialization of predictions and simulation results.

Input is two CSV files::

    observations.csv    unit_id,y
    units.csv           unit_id,z1[,z2,...]

Predictions are written as a JSON array of records::

    {"query": [...] | null, "method": "rem-global" | "rem-local" | "two-step" | "barycenter",
     "grid_size": M, "quantiles": [...],
     "density": {"x": [...], "f": [...], "bandwidth": h, "degenerate": false},   # optional
     "diagnostics": {...}}

or as a flat CSV with one row per quantile cell or density point.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import IngestionError, ZeroObservationUnitWarning
from .measures import DomainInterval, EmpiricalMeasure

logger = logging.getLogger(__name__)


@dataclass
class LongFormatDataset:
    """Per-unit samples and covariates, in units-file order.

    Units without observations are listed in ``excluded`` and are absent
    from ``unit_ids``, ``z`` and ``samples``.
    """

    unit_ids: list
    z: np.ndarray
    samples: list
    excluded: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def measures(self, domain: Optional[DomainInterval] = None) -> list:
        return [EmpiricalMeasure(s, domain=domain) for s in self.samples]


def _read_rows(path, expected_first: str) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        if not header or header[0] != expected_first:
            raise IngestionError(f"{path}: header must start with {expected_first!r}, got {header}")
        rows = [(lineno, row) for lineno, row in enumerate(reader, start=2) if any(c.strip() for c in row)]
    return header, rows


def _number(text: str, path, lineno: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"{path}:{lineno}: column {column!r} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise IngestionError(f"{path}:{lineno}: column {column!r} is not finite: {text!r}")
    return value


def ingest(observations_path, units_path=None) -> LongFormatDataset:
    """Read and validate the two-file long format.

    When ``units_path`` is None the units are taken from the observations
    in order of first appearance and carry no covariates (``p == 0``).
    """
    obs_header, obs_rows = _read_rows(observations_path, "unit_id")
    if obs_header != ["unit_id", "y"]:
        raise IngestionError(f"{observations_path}: header must be 'unit_id,y', got {','.join(obs_header)}")

    order: list = []
    covs: dict = {}
    if units_path is not None:
        header, rows = _read_rows(units_path, "unit_id")
        zcols = header[1:]
        if not zcols:
            raise IngestionError(f"{units_path}: no covariate columns after unit_id")
        for lineno, row in rows:
            if len(row) != len(header):
                raise IngestionError(
                    f"{units_path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            uid = row[0].strip()
            if uid in covs:
                raise IngestionError(f"{units_path}:{lineno}: duplicate unit_id {uid!r}")
            covs[uid] = [_number(v, units_path, lineno, c) for v, c in zip(row[1:], zcols)]
            order.append(uid)

    samples: dict = {uid: [] for uid in order}
    for lineno, row in obs_rows:
        if len(row) != 2:
            raise IngestionError(f"{observations_path}:{lineno}: expected 2 fields, got {len(row)}")
        uid = row[0].strip()
        if uid not in samples:
            if units_path is not None:
                raise IngestionError(
                    f"{observations_path}:{lineno}: unit_id {uid!r} does not appear in {units_path}"
                )
            samples[uid] = []
            order.append(uid)
        samples[uid].append(_number(row[1], observations_path, lineno, "y"))

    excluded = [uid for uid in order if not samples[uid]]
    for uid in excluded:
        warnings.warn(f"unit {uid!r} has no observations and is excluded", ZeroObservationUnitWarning, stacklevel=2)
        logger.warning("excluding unit %s: no observations", uid)
    kept = [uid for uid in order if samples[uid]]
    if units_path is not None:
        z = np.array([covs[uid] for uid in kept], dtype=float).reshape(len(kept), -1)
    else:
        z = np.empty((len(kept), 0))
    return LongFormatDataset(
        unit_ids=kept,
        z=z,
        samples=[np.array(samples[uid], dtype=float) for uid in kept],
        excluded=excluded,
    )


def write_dataset(samples, z, unit_ids, observations_path, units_path):
    """Write samples and covariates in the two-file layout."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    with open(observations_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "y"])
        for uid, s in zip(unit_ids, samples):
            for y in np.ravel(s):
                w.writerow([uid, repr(float(y))])
    with open(units_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id"] + [f"z{j + 1}" for j in range(z.shape[1])])
        for uid, row in zip(unit_ids, z):
            w.writerow([uid] + [repr(float(v)) for v in row])


def _floats(values) -> list:
    return [float(v) for v in np.ravel(values)]


@dataclass
class OutputRecord:
    query: Optional[list]
    method: str
    quantiles: list
    density: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid_size(self) -> int:
        return len(self.quantiles)

    def to_dict(self) -> dict:
        out = {
            "query": None if self.query is None else _floats(self.query),
            "method": self.method,
            "grid_size": self.grid_size,
            "quantiles": _floats(self.quantiles),
        }
        if self.density is not None:
            out["density"] = {
                "x": _floats(self.density["x"]),
                "f": _floats(self.density["f"]),
                "bandwidth": float(self.density.get("bandwidth", float("nan"))),
                "degenerate": bool(self.density.get("degenerate", False)),
            }
        out["diagnostics"] = self.diagnostics
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OutputRecord":
        if len(d["quantiles"]) != d["grid_size"]:
            raise IngestionError("grid_size does not match the number of quantiles")
        return cls(
            query=d["query"],
            method=d["method"],
            quantiles=list(d["quantiles"]),
            density=d.get("density"),
            diagnostics=d.get("diagnostics", {}),
        )


def records_to_json(records: Sequence[OutputRecord]) -> str:
    return json.dumps([r.to_dict() for r in records], indent=1) + "\n"


def records_from_json(text: str) -> list:
    return [OutputRecord.from_dict(d) for d in json.loads(text)]


def records_to_csv(records: Sequence[OutputRecord]) -> str:
    """Flatten records: one row per quantile cell and per density point."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["record", "method", "query", "kind", "index", "x", "value"])
    for r_idx, rec in enumerate(records):
        query = "" if rec.query is None else ";".join(repr(float(v)) for v in rec.query)
        m = rec.grid_size
        for i, q in enumerate(rec.quantiles):
            w.writerow([r_idx, rec.method, query, "quantile", i, repr((i + 0.5) / m), repr(float(q))])
        if rec.density is not None:
            for i, (x, f) in enumerate(zip(rec.density["x"], rec.density["f"])):
                w.writerow([r_idx, rec.method, query, "density", i, repr(float(x)), repr(float(f))])
    return buf.getvalue()


def write_text(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_study(result, out_dir) -> dict:
    """Write ``runs.jsonl``, ``summary.json`` and ``summary.csv`` into ``out_dir``.

    File contents depend only on the scenario, never on worker count or
    timing.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "runs": os.path.join(out_dir, "runs.jsonl"),
        "summary": os.path.join(out_dir, "summary.json"),
        "table": os.path.join(out_dir, "summary.csv"),
    }
    with open(paths["runs"], "w", encoding="utf-8") as fh:
        for r in result.runs:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    sc = result.scenario
    meta = {
        "setting": sc.setting,
        "n_ladder": list(sc.n_ladder),
        "runs": sc.runs,
        "master_seed": sc.master_seed,
        "lambda_rate": sc.lambda_rate,
        "rem_mode": sc.mode,
        "params": asdict(sc.params),
        "query_points": sc.query_points,
        "grid_cap": sc.grid_cap,
        "two_step": sc.two_step,
    }
    with open(paths["summary"], "w", encoding="utf-8") as fh:
        json.dump({"scenario": meta, **result.summary}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(paths["table"], "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_table_csv(result.summary))
    return paths


def summary_table_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n", "count", "mean", "median", "q1", "q3", "slope_mean", "slope_median"])
    for method, entry in summary["methods"].items():
        for n, s in entry["by_n"].items():
            w.writerow([
                method, n, s["count"], repr(s["mean"]), repr(s["median"]), repr(s["q1"]), repr(s["q3"]),
                repr(entry.get("slope_mean", float("nan"))), repr(entry.get("slope_median", float("nan"))),
            ])
    return buf.getvalue()

import csv
import io
import json

import numpy as np
import pytest

from wassrem import barycenter
from wassrem.cli import main, parse_queries
from wassrem.dataio import (
    OutputRecord,
    ingest,
    records_from_json,
    records_to_csv,
    records_to_json,
    write_dataset,
)
from wassrem.exceptions import IngestionError, ZeroObservationUnitWarning


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def cohort_files(tmp_path, four_cohorts):
    z, measures = four_cohorts
    obs, units = tmp_path / "obs.csv", tmp_path / "units.csv"
    write_dataset([m.values for m in measures], z, ["a", "b", "c", "d"], obs, units)
    return str(obs), str(units), measures


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestIngest:
    def test_four_cohorts(self, cohort_files):
        obs, units, measures = cohort_files
        data = ingest(obs, units)
        assert data.n == 4 and data.p == 1
        assert [s.size for s in data.samples] == [1, 2, 5, 10]
        np.testing.assert_array_equal(data.z[:, 0], [2, 4, 6, 8])
        for m, s in zip(measures, data.measures()):
            np.testing.assert_array_equal(m.values, s.values)

    def test_missing_unit_named(self, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\nu1,1.0\nghost,2.0\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1\nu1,0.5\n")
        with pytest.raises(IngestionError, match=r"o\.csv:3: unit_id 'ghost'"):
            ingest(obs, units)

    def test_zero_observation_unit(self, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\nu1,1.0\nu3,2.0\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1\nu1,0.5\nu2,0.7\nu3,0.9\n")
        with pytest.warns(ZeroObservationUnitWarning, match="u2") as rec:
            data = ingest(obs, units)
        assert rec[0].category.code == "zero-observation-unit"
        assert data.unit_ids == ["u1", "u3"] and data.excluded == ["u2"]

    def test_non_numeric_row_number(self, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\nu1,1.0\nu1,abc\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1\nu1,0.5\n")
        with pytest.raises(IngestionError, match=r":3: column 'y' is not numeric"):
            ingest(obs, units)

    def test_inconsistent_arity(self, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\nu1,1.0\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1,z2\nu1,0.5,1\nu2,0.3\n")
        with pytest.raises(IngestionError, match=r":3: expected 3 fields"):
            ingest(obs, units)

    def test_bad_header(self, tmp_path):
        obs = _write(tmp_path / "o.csv", "id,value\nu1,1.0\n")
        with pytest.raises(IngestionError, match="header"):
            ingest(obs)


class TestSerialization:
    def _record(self):
        rng = np.random.default_rng(3)
        q = np.sort(rng.normal(size=7)) / 3.0
        return OutputRecord(
            query=[1 / 3], method="global", quantiles=q,
            density={"x": np.linspace(0, 1, 5) / 7, "f": rng.uniform(size=5), "bandwidth": 0.1, "degenerate": False},
            diagnostics={"n_units": 4, "warnings": []},
        )

    def test_json_round_trip_bytes(self):
        text = records_to_json([self._record(), OutputRecord(None, "barycenter", [0.1, 0.2])])
        assert records_to_json(records_from_json(text)) == text

    def test_schema_keys(self):
        d = json.loads(records_to_json([self._record()]))[0]
        assert list(d) == ["query", "method", "grid_size", "quantiles", "density", "diagnostics"]
        assert d["grid_size"] == 7

    def test_grid_size_mismatch_rejected(self):
        with pytest.raises(IngestionError):
            OutputRecord.from_dict({"query": None, "method": "m", "grid_size": 3, "quantiles": [1.0]})

    def test_csv_matches_json(self):
        rec = self._record()
        d = json.loads(records_to_json([rec]))[0]
        rows = list(csv.DictReader(io.StringIO(records_to_csv([rec]))))
        qs = [float(r["value"]) for r in rows if r["kind"] == "quantile"]
        fs = [float(r["value"]) for r in rows if r["kind"] == "density"]
        np.testing.assert_allclose(qs, d["quantiles"], rtol=1e-12, atol=0)
        np.testing.assert_allclose(fs, d["density"]["f"], rtol=1e-12, atol=0)


class TestQueries:
    def test_inline_scalar(self):
        assert parse_queries("3,5", 1) == [[3.0], [5.0]]

    def test_inline_vector(self):
        assert parse_queries("1,2;3,4", 2) == [[1.0, 2.0], [3.0, 4.0]]

    def test_file(self, tmp_path):
        path = _write(tmp_path / "q.txt", "# queries\n1.5\n2.5\n")
        assert parse_queries(path, 1) == [[1.5], [2.5]]


class TestCli:
    def test_fit_predict_global(self, capsys, cohort_files):
        obs, units, measures = cohort_files
        code, out, _ = _run(capsys, ["fit-predict", "--observations", obs, "--units", units, "--queries", "3,5"])
        assert code == 0
        recs = json.loads(out)
        assert len(recs) == 2
        assert recs[0]["diagnostics"]["weight_min"] == pytest.approx(-0.2)
        assert recs[1]["quantiles"] == barycenter(measures).values.tolist()
        assert recs[0]["density"]["f"]

    def test_barycenter_matches_fit_at_mean(self, capsys, cohort_files):
        obs, units, _ = cohort_files
        _, fit_out, _ = _run(capsys, ["fit-predict", "--observations", obs, "--units", units, "--queries", "5"])
        code, bary_out, _ = _run(capsys, ["barycenter", "--observations", obs])
        assert code == 0
        bary = json.loads(bary_out)[0]
        assert bary["method"] == "barycenter" and bary["query"] is None
        assert bary["quantiles"] == json.loads(fit_out)[0]["quantiles"]

    def test_barycenter_symmetric_pair(self, capsys, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\na,0\nb,2\n")
        _, out, _ = _run(capsys, ["barycenter", "--observations", obs, "--no-density"])
        assert json.loads(out)[0]["quantiles"] == [1.0]

    def test_local_with_two_covariates_is_usage_error(self, capsys, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\na,0\nb,1\nc,2\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1,z2\na,0,1\nb,1,0\nc,2,2\n")
        code, _, err = _run(capsys, ["fit-predict", "--observations", obs, "--units", units,
                                     "--method", "local", "--queries", "1,1"])
        assert code == 2
        assert json.loads(err.strip().splitlines()[-1])["error"] == "usage-error"

    def test_two_step_reports_exclusion(self, capsys, cohort_files):
        obs, units, _ = cohort_files
        code, out, _ = _run(capsys, ["fit-predict", "--observations", obs, "--units", units,
                                     "--method", "two-step", "--queries", "5", "--two-step-grid", "100"])
        assert code == 0
        (rec,) = json.loads(out)
        assert rec["method"] == "two-step"
        assert rec["diagnostics"]["excluded_units"] == 1
        assert rec["diagnostics"]["excluded_unit_ids"] == ["a"]
        assert "two-step-exclusion" in rec["diagnostics"]["warnings"]

    def test_extrapolation_code(self, capsys, cohort_files):
        obs, units, _ = cohort_files
        _, out, _ = _run(capsys, ["fit-predict", "--observations", obs, "--units", units, "--queries", "100"])
        assert "extrapolation" in json.loads(out)[0]["diagnostics"]["warnings"]

    def test_zero_observation_code(self, capsys, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\na,0\nb,1\nc,2\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1\na,0\nb,1\nc,2\nd,3\n")
        _, out, _ = _run(capsys, ["fit-predict", "--observations", obs, "--units", units, "--queries", "1"])
        rec = json.loads(out)[0]
        assert "zero-observation-unit" in rec["diagnostics"]["warnings"]
        assert rec["diagnostics"]["excluded_unit_ids"] == ["d"]

    def test_degenerate_design_is_fatal(self, capsys, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\na,0\nb,1\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1\na,1\nb,1\n")
        code, _, err = _run(capsys, ["fit-predict", "--observations", obs, "--units", units, "--queries", "1"])
        assert code == 1
        assert json.loads(err.strip().splitlines()[-1])["error"] == "degenerate-design"

    def test_ingestion_error_reported(self, capsys, tmp_path):
        obs = _write(tmp_path / "o.csv", "unit_id,y\nzz,0\n")
        units = _write(tmp_path / "u.csv", "unit_id,z1\na,1\n")
        code, _, err = _run(capsys, ["fit-predict", "--observations", obs, "--units", units, "--queries", "1"])
        assert code == 1
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["error"] == "ingestion-error" and "zz" in payload["message"]

    def test_csv_output_matches_json(self, capsys, cohort_files, tmp_path):
        obs, units, _ = cohort_files
        base = ["fit-predict", "--observations", obs, "--units", units, "--queries", "3,5"]
        _run(capsys, base + ["--out", str(tmp_path / "r.json")])
        _run(capsys, base + ["--format", "csv", "--out", str(tmp_path / "r.csv")])
        recs = json.loads((tmp_path / "r.json").read_text())
        rows = list(csv.DictReader(open(tmp_path / "r.csv", encoding="utf-8")))
        for i, rec in enumerate(recs):
            qs = [float(r["value"]) for r in rows if r["record"] == str(i) and r["kind"] == "quantile"]
            np.testing.assert_allclose(qs, rec["quantiles"], rtol=1e-12, atol=0)

    def test_simulate_is_worker_invariant(self, capsys, tmp_path):
        outs = []
        for workers in ("1", "2"):
            d = tmp_path / f"w{workers}"
            code, stdout, _ = _run(capsys, ["simulate", "--setting", "III", "--n-ladder", "30,40", "--runs", "2",
                                            "--seed", "9", "--out-dir", str(d), "--workers", workers])
            assert code == 0 and stdout.startswith("method,n,")
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        assert outs[0] == outs[1]
        assert set(outs[0]) == {"runs.jsonl", "summary.json", "summary.csv"}

    def test_bad_setting_rejected(self, capsys, tmp_path):
        code, _, _ = _run(capsys, ["simulate", "--setting", "V", "--out-dir", str(tmp_path)])
        assert code == 2

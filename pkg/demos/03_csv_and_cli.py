"""From long-format CSV files to JSON predictions via the command line.

Writes a synthetic two-file dataset (observations + units), runs the
``fit-predict`` and ``barycenter`` subcommands in-process and reads the
JSON back.  The same commands work from a shell as ``wassrem ...``.

Run:  python3 demos/03_csv_and_cli.py
"""

import contextlib
import io
import json
import tempfile
from pathlib import Path

import numpy as np

from wassrem.cli import main
from wassrem.dataio import ingest, write_dataset

rng = np.random.default_rng(0)
n = 30
z = rng.uniform(-1, 1, n)
samples = [rng.normal(2 * zi, 1 + 0.5 * zi, rng.integers(1, 12)) for zi in z]
ids = [f"cohort{i:02d}" for i in range(n)]

tmp = Path(tempfile.mkdtemp())
obs, units = tmp / "observations.csv", tmp / "units.csv"
write_dataset(samples, z, ids, obs, units)
print(obs.read_text().splitlines()[:3], units.read_text().splitlines()[:3])
print("ingested units:", ingest(obs, units).n)


def run(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


code, out = run(["fit-predict", "--observations", str(obs), "--units", str(units),
                 "--method", "local", "--queries=-0.5,0,0.5", "--no-density"])
for rec in json.loads(out):
    q = np.array(rec["quantiles"])
    print(f"z={rec['query'][0]:+.1f}  median {q[q.size // 2]:+.3f}  "
          f"bandwidth {rec['diagnostics']['bandwidth']:.3f}  warnings {rec['diagnostics']['warnings']}")

code, out = run(["barycenter", "--observations", str(obs), "--format", "csv", "--no-density"])
print(out.splitlines()[:3])

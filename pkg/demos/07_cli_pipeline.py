"""
The command line pipeline
=========================

``pods`` runs the same steps from a shell. Every stage writes a fragment
into ``out/fragments`` and ``pods report`` merges them into CSV and JSON
tables. This script drives the entry point in-process with a small
synthetic market.
"""
import json
import tempfile
from pathlib import Path

from pods.cli import main

work = Path(tempfile.mkdtemp())
out = work / "run"
# keys not exposed as flags go in a key = value file
(work / "pods.cfg").write_text(
    "# small synthetic market\n"
    "synth_assets = 30\n"
    "synth_days = 200\n"
    "targets = 0, 0.5, 0.9\n",
    encoding="utf-8",
)
common = ["--config", str(work / "pods.cfg"), "--out", str(out), "--repeats", "1"]

for cmd in ("ingest", "frontier", "sparsify", "reduce-lp"):
    code = main([cmd, *common])
    print(f"pods {cmd}: exit {code}")

print("pods report: exit", main(["report", *common]))
for f in sorted(out.glob("*")):
    print("  ", f.name)

report = json.loads((out / "report.json").read_text())
print("report sections:", sorted(report))

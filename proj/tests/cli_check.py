"""Runs the polyrg binary through its exit-code contract and validates a full JSON report."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

binary, schema_path = sys.argv[1], sys.argv[2]
schema = json.loads(Path(schema_path).read_text())
failures = []


def run(args, expected):
    proc = subprocess.run([binary, *args], capture_output=True, text=True)
    if proc.returncode != expected:
        failures.append(f"{' '.join(args)}: exit {proc.returncode}, expected {expected}\n{proc.stderr}")
    return proc


def validate(text, label):
    try:
        jsonschema.validate(json.loads(text), schema)
    except (json.JSONDecodeError, jsonschema.ValidationError) as e:
        failures.append(f"{label}: {e}")


mayer = run(["mayer-check", "--L", "3", "--N", "1", "--z", "0.05", "--sigma0", "0.1", "--seed", "7"], 0)
validate(mayer.stdout, "mayer-check")
run(["report"], 2)
run(["report", "--suite", "bogus"], 2)
run(["report", "--suite", "mayer", "--L", "4"], 2)
run(["mayer-check", "--no-such-flag"], 2)
run(["report", "--suite", "mayer", "--config", "/nonexistent/polyrg.cfg"], 2)
version = run(["--version"], 0)
if not version.stdout.strip():
    failures.append("--version printed nothing")

with tempfile.TemporaryDirectory() as tmp:
    cfg = Path(tmp) / "run.cfg"
    cfg.write_text("# mayer example\nL=3\nz=0.05\nsigma0=0.1\nseed=7\nsuite=mayer\n")
    from_file = run(["report", "--config", str(cfg)], 0)
    if json.loads(from_file.stdout)["reports"] != json.loads(mayer.stdout)["reports"]:
        failures.append("config file and flags disagree")

    out = Path(tmp) / "all.json"
    run(["report", "--suite", "all", "--parallel", "4", "--out", str(out)], 0)
    validate(out.read_text(), "report --suite all")

    csv_path = Path(tmp) / "mayer.csv"
    run(["mayer-check", "--z", "0.05", "--sigma0", "0.1", "--format", "csv", "--out", str(csv_path)], 0)
    if "suite,check,anchor,oracle,status,seed,message,key,value" not in csv_path.read_text():
        failures.append("csv header missing")

for f in failures:
    print("FAIL", f)
print("cli checks:", "ok" if not failures else f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)

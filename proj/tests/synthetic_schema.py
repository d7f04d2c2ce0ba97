"""Runs a short synthetic sweep and validates synthetic.json against the published schema."""
import json
import pathlib
import shutil
import subprocess
import sys

try:
    import jsonschema
except ImportError:
    print("jsonschema not installed; skipping")
    sys.exit(77)

cli, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
shutil.rmtree(work, ignore_errors=True)
work.mkdir(parents=True)
(work / "config.json").write_text(json.dumps({"synthetic": {"max_steps": 40, "train_points": 512}}))
subprocess.run([cli, "synthetic", "--config", str(work / "config.json"), "--out", str(work / "out")], check=True)
report = json.loads((work / "out" / "synthetic.json").read_text())
jsonschema.validate(report, json.loads(schema_path.read_text()))
assert [s["setting"] for s in report["settings"]] == [1, 2, 3]
print("synthetic.json matches", schema_path.name)

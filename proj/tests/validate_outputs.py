"""Runs the CLI on a small toy workspace and validates every JSON/CSV it
writes against schemas/."""
import argparse
import csv
import fnmatch
import json
import pathlib
import re
import subprocess
import sys
import tempfile

import jsonschema

# (glob relative to the workspace, schema file); first match wins
TABLE = [
    ("config.json", "config.schema.json"),
    ("model.json", "model.schema.json"),
    ("labels.csv", "labels.csv.schema.json"),
    ("masks/*.json", "masks.schema.json"),
    ("*.f32.json", "array_header.schema.json"),
    ("out/discover/summary.json", "summary.schema.json"),
    ("out/discover/segments.csv", "segments.csv.schema.json"),
    ("out/discover/clusters.csv", "clusters.csv.schema.json"),
    ("out/score/space_*.json", "space.schema.json"),
    ("out/score/prototypes_*.json", "prototypes.schema.json"),
    ("out/score/scores.csv", "scores.csv.schema.json"),
    ("out/score/completeness.csv", "completeness.csv.schema.json"),
    ("out/explain/*/legend.json", "legend.schema.json"),
    ("out/bench/concepts.csv", "concepts.csv.schema.json"),
    ("out/bench/auc.csv", "auc.csv.schema.json"),
    ("out/bench/*/curves.csv", "curves.csv.schema.json"),
    ("out/bench/*/traces.json", "traces.schema.json"),
]

NUMBER = re.compile(r"^-?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")


def cell(s):
    if NUMBER.match(s):
        return int(s) if re.match(r"^-?\d+$", s) else float(s)
    return s


def check_csv(path, schema, validator):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    want = list(schema["properties"])
    if rows[0] != want:
        raise ValueError(f"header {rows[0]} != {want}")
    for i, r in enumerate(rows[1:], 1):
        if len(r) != len(want):
            raise ValueError(f"row {i}: {len(r)} cells")
        validator.validate({k: cell(v) for k, v in zip(want, r)})


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--synth", required=True)
    ap.add_argument("--schemas", required=True)
    a = ap.parse_args()
    schemas = pathlib.Path(a.schemas)

    with tempfile.TemporaryDirectory() as tmp:
        ws = pathlib.Path(tmp)
        subprocess.run([a.synth, "--out", str(ws), "--images", "24", "--seed", "5"], check=True, stdout=subprocess.DEVNULL)
        cfg = json.loads((ws / "config.json").read_text())
        cfg["bench_modes"] = ["layer_masking", "inpaint_original_scale", "crop_and_rescale"]
        cfg["bench_traces"] = True
        cfg["min_cluster_size"] = 3
        (ws / "config.json").write_text(json.dumps(cfg, indent=2))
        subprocess.run([a.cli, "--config", str(ws / "config.json"), "all"], check=True, stdout=subprocess.DEVNULL)

        failures, seen = [], 0
        for path in sorted(ws.rglob("*")):
            if path.suffix not in (".json", ".csv"):
                continue
            rel = path.relative_to(ws).as_posix()
            name = next((s for g, s in TABLE if fnmatch.fnmatch(rel, g)), None)
            if name is None:
                failures.append(f"{rel}: no schema")
                continue
            schema = json.loads((schemas / name).read_text())
            validator = jsonschema.Draft202012Validator(schema)
            try:
                if path.suffix == ".csv":
                    check_csv(path, schema, validator)
                else:
                    validator.validate(json.loads(path.read_text()))
                seen += 1
            except (jsonschema.ValidationError, ValueError) as e:
                failures.append(f"{rel} ({name}): {getattr(e, 'message', e)}")
        for f in failures:
            print("FAIL", f)
        print(f"{seen} files valid, {len(failures)} failures")
        return 1 if failures or seen == 0 else 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Recompute summary.csv from results.csv and compare field by field."""
import csv
import math
import statistics
import sys
from collections import defaultdict
from pathlib import Path

TOL = 1e-9


def mean_stderr(xs):
    m = statistics.fmean(xs)
    se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
    return m, se


def budget(row):
    return int(row["budget"]) if row["budget"] else None


def close(a, b):
    return abs(a - b) <= TOL * max(1.0, abs(a), abs(b))


def main(root):
    root = Path(root)
    groups = defaultdict(list)
    with open(root / "results.csv", newline="") as f:
        for row in csv.DictReader(f):
            if row["error"]:
                continue
            groups[(row["condition"], budget(row))].append(row)

    expected = {}
    for key, rows in groups.items():
        comp = mean_stderr([float(r["completion"]) for r in rows])
        samples = [float(r["human_samples"]) for r in rows if r["human_samples"]]
        expected[key] = {
            "n_seeds": len(rows),
            "completion_mean": comp[0],
            "completion_stderr": comp[1],
            "samples": mean_stderr(samples) if samples else None,
        }

    failures = 0
    checked = 0
    with open(root / "summary.csv", newline="") as f:
        for row in csv.DictReader(f):
            key = (row["condition"], budget(row))
            exp = expected.get(key)
            if exp is None:
                print(f"unexpected summary row {key}")
                failures += 1
                continue
            got = {
                "n_seeds": int(row["n_seeds"]),
                "completion_mean": float(row["completion_mean"]),
                "completion_stderr": float(row["completion_stderr"]),
            }
            want = {k: exp[k] for k in got}
            demo = expected.get(("demo", key[1]))
            if exp["samples"] is not None:
                got["human_samples_mean"] = float(row["human_samples_mean"])
                got["human_samples_stderr"] = float(row["human_samples_stderr"])
                want["human_samples_mean"], want["human_samples_stderr"] = exp["samples"]
                if demo is not None:
                    ratio = exp["completion_mean"] / exp["samples"][0]
                    demo_ratio = demo["completion_mean"] / demo["samples"][0]
                    got["completion_per_sample_ratio"] = float(row["completion_per_sample_ratio"])
                    want["completion_per_sample_ratio"] = ratio / demo_ratio
                    got["sample_reduction_vs_demo"] = float(row["sample_reduction_vs_demo"])
                    want["sample_reduction_vs_demo"] = 1.0 - exp["samples"][0] / demo["samples"][0]
            for field, value in got.items():
                checked += 1
                if not close(value, want[field]):
                    print(f"{key} {field}: summary {value!r}, recomputed {want[field]!r}")
                    failures += 1
    print(f"checked {checked} values, {failures} mismatches")
    return 1 if failures or checked == 0 else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))

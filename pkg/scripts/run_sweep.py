"""Singularity sweeps for the stereographic, closest-point and Pluecker charts.

Writes ``results/sweep_<param>.csv`` and prints the rows that drive the checks.
"""
import argparse
import csv
import sys
from pathlib import Path

from spba.analysis import SWEEP_PARAMS
from spba.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=str(ROOT / "results"))
    args = parser.parse_args()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status = 0
    for param in SWEEP_PARAMS:
        path = out_dir / f"sweep_{param}.csv"
        status = max(status, main(["singularity-sweep", "--param", param, "--out", str(path)]))
        with open(path) as fh:
            for row in csv.DictReader(fh):
                cells = {k: v for k, v in row.items() if v != ""}
                print(", ".join(f"{k}={v}" for k, v in cells.items()))
    sys.exit(status)

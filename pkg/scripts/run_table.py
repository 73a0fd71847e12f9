"""Write the unobservable-dimension table for every preset to ``results/obsv_table.csv``."""
import argparse
import sys
from pathlib import Path

from spba.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(ROOT / "results" / "obsv_table.csv"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    sys.exit(main(["obsv-table", "--config", str(ROOT / "configs" / "obsv_table.json"),
                   "--seed", str(args.seed), "--out", args.out]))

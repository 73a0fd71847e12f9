"""FEJ on/off Monte-Carlo batches on the default config; prints the leakage contrast."""
import argparse
import json
import sys
from pathlib import Path

from spba.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out-dir", default=str(ROOT / "results"))
    args = parser.parse_args()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status, leak = 0, {}
    for fej in ("on", "off"):
        path = out_dir / f"montecarlo_fej_{fej}.json"
        status = max(status, main(["ba-montecarlo", "--config", str(ROOT / "configs" / "montecarlo.json"),
                                   "--runs", str(args.runs), "--seed", str(args.seed), "--jobs", str(args.jobs),
                                   "--fej", fej, "--out", str(path)]))
        for rep in json.loads(path.read_text())["reports"]:
            agg = rep["aggregate"]
            leak[fej] = agg["median_leakage"]
            print(f"fej={fej} {rep['scenario']}: median leakage {agg['median_leakage']:.3e}, "
                  f"aligned rmse {agg['median_aligned_position_rmse']:.4f} m, failed {rep['failed_runs']}")
    if leak.get("on") and leak.get("off"):
        print(f"leakage ratio off/on: {leak['off'] / leak['on']:.3e}")
    sys.exit(status)

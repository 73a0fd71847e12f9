"""Regenerate the golden scenario configs under ``configs/``."""
import argparse
import json
from pathlib import Path

from spba.experiments import DEFAULT_MONTE_CARLO
from spba.simulation import CONFIG_SCHEMA_VERSION, PRESETS, generate_scenario


def dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "configs"))
    args = parser.parse_args()
    root = Path(args.out)
    for name in PRESETS:
        spec = generate_scenario(name).to_dict()
        dump({"schema_version": CONFIG_SCHEMA_VERSION, "scenarios": [spec]}, root / "presets" / f"{name}.json")
    dump({"schema_version": CONFIG_SCHEMA_VERSION, "scenarios": [{"preset": n} for n in PRESETS]},
         root / "obsv_table.json")
    dump(DEFAULT_MONTE_CARLO, root / "montecarlo.json")
    print(f"wrote {len(PRESETS) + 2} configs to {root}")


if __name__ == "__main__":
    main()

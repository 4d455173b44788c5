"""Run every config in scripts/configs and print the summary lines.

    python3 scripts/run_all.py [--jobs K] [--output-root runs]
"""

import argparse
import sys
from pathlib import Path

from hangstring.cli import run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--output-root", default="runs")
    args = ap.parse_args()
    statuses = {}
    for cfg in sorted((Path(__file__).parent / "configs").glob("*.toml")):
        statuses[cfg.stem] = run(cfg, jobs=args.jobs, output_dir=Path(args.output_root) / cfg.stem)
    print()
    for name, status in statuses.items():
        print(f"{name:24s} exit {status}")
    return 0 if all(s == 0 for s in statuses.values()) else 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Run the bundled benchmark configs across seeds and tabulate CRPS.

Each (config, seed) pair maps to one self-contained run directory via the
CLI's `run` subcommand; afterwards the per-run summary.csv files are merged
into one model x lead table of median CRPS (% of capacity) per case.

Desk scale: roughly 2-4 minutes per (config, seed) on a laptop-class CPU.
"""

import argparse
import csv
import statistics
import sys
from collections import defaultdict
from pathlib import Path

from aqrforecast.cli import main as cli_main

DEFAULT_CONFIGS = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))


def run_all(configs, seeds, out_root):
    rows = []  # (case, model, lead, seed, crps_pct)
    for cfg_path in configs:
        case = cfg_path.stem
        for seed in seeds:
            out_dir = out_root / case
            rc = cli_main([
                "run", "--config", str(cfg_path),
                "--out", str(out_dir), "--seed", str(seed),
            ])
            if rc != 0:
                print(f"run failed for {cfg_path.name} seed {seed}", file=sys.stderr)
                return rows, rc
            with (out_dir / f"seed{seed}" / "summary.csv").open(newline="") as fh:
                for rec in csv.DictReader(fh):
                    rows.append((
                        case, rec["model"], int(rec["lead"]),
                        seed, float(rec["crps_pct"]),
                    ))
    return rows, 0


def print_tables(rows):
    by_case = defaultdict(lambda: defaultdict(list))
    for case, model, lead, _seed, crps_pct in rows:
        by_case[case][(model, lead)].append(crps_pct)
    for case in sorted(by_case):
        cells = by_case[case]
        models = sorted({m for m, _ in cells})
        leads = sorted({k for _, k in cells})
        width = max(len(m) for m in models)
        print(f"\n{case}: median test CRPS (% of capacity) over seeds")
        print(" " * width + "".join(f"  lead {k}" for k in leads))
        for m in models:
            vals = (statistics.median(cells[(m, k)]) for k in leads)
            print(m.ljust(width) + "".join(f"  {v:6.2f}" for v in vals))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument(
        "--configs", nargs="+", type=Path, default=DEFAULT_CONFIGS,
        help="experiment config files (default: every configs/*.json)",
    )
    ap.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    ap.add_argument("--out", type=Path, default=Path("runs"))
    args = ap.parse_args(argv)
    if not args.configs:
        ap.error("no config files found")
    rows, rc = run_all(args.configs, args.seeds, args.out)
    if rows:
        print_tables(rows)
    return rc


if __name__ == "__main__":
    raise SystemExit(main())

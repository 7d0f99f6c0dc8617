#!/usr/bin/env python3
"""Write a synthetic bounded AR(1) series to CSV.

The output is a complete (gap-free) series suitable as the `data.source:
csv` input of an experiment config; missingness is then simulated by the
`simulate` stage, not baked into the file.
"""

import argparse
from pathlib import Path

from aqrforecast.pipeline import ArSpec, generate_synthetic, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path, help="destination CSV path")
    ap.add_argument("--n", type=int, default=20000, help="series length")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rho", type=float, default=0.98, help="latent AR(1) persistence")
    ap.add_argument("--sigma", type=float, default=0.15, help="latent innovation scale")
    args = ap.parse_args(argv)

    series = generate_synthetic(
        args.n, seed=args.seed, spec=ArSpec(rho=args.rho, sigma=args.sigma)
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, args.out)
    print(f"wrote {args.n} points to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""argparse front end: simulate / train / evaluate / run.

Every subcommand takes --config (JSON experiment file) plus optional
--out and --seed overrides. Errors raised by the library surface as one
machine-readable JSON line on stderr and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import AqrError, ConfigError
from .experiment import (
    TOOL_VERSION,
    cmd_evaluate,
    cmd_run,
    cmd_simulate,
    cmd_train,
    config_from_dict,
)

__all__ = ["build_parser", "main"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqrforecast",
        description=(
            "Probabilistic forecasting of bounded time series with missing "
            "values: simulate missingness, train quantile models, verify forecasts."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {TOOL_VERSION}"
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config file")
    common.add_argument("--out", help="output directory (overrides config out_dir)")
    common.add_argument("--seed", type=int, help="run seed (overrides config seed)")

    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser(
        "simulate",
        parents=[common],
        help="generate/load a complete series and write a masked copy",
    )
    sim.add_argument(
        "--mechanism",
        choices=["sporadic", "blocks", "selfmask"],
        help="override the masking mechanism from the config",
    )
    sim.add_argument("--p", type=float, help="sporadic: per-point missingness probability")
    sim.add_argument("--n-blocks", type=int, help="blocks: number of outage blocks")
    sim.add_argument("--len-min", type=int, help="blocks: minimum block length")
    sim.add_argument("--len-max", type=int, help="blocks: maximum block length")
    sim.add_argument("--threshold", type=float, help="selfmask: censor values above this")
    sub.add_parser("train", parents=[common], help="fit all configured models and leads")
    sub.add_parser(
        "evaluate", parents=[common], help="score trained models, write reports and plots"
    )
    sub.add_parser(
        "run", parents=[common], help="simulate, train and evaluate in one pass"
    )
    return parser


_MECH_FLAGS = ("p", "n_blocks", "len_min", "len_max", "threshold")


def _apply_mechanism_flags(raw: dict, args: argparse.Namespace) -> None:
    given = {
        name: getattr(args, name)
        for name in _MECH_FLAGS
        if getattr(args, name, None) is not None
    }
    if args.mechanism is None and not given:
        return
    mech = dict(raw.get("mechanism", {}))
    if args.mechanism is not None and args.mechanism != mech.get("kind"):
        mech = {"kind": args.mechanism}  # stale params of the old kind are dropped
    mech.update(given)
    raw["mechanism"] = mech


def _read_raw_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = _read_raw_config(args.config)
        if args.command == "simulate":
            _apply_mechanism_flags(raw, args)
        cfg = config_from_dict(raw, out_override=args.out, seed_override=args.seed)
        if args.command == "simulate":
            out = cmd_simulate(cfg)
            print(f"simulated series written to {out}")
        elif args.command == "train":
            result = cmd_train(cfg)
            print(
                f"trained {len(result['artifacts'])} model(s) into {cfg.run_dir / 'models'}"
            )
            for job, message in sorted(result["failures"].items()):
                print(f"FAILED {job}: {message}", file=sys.stderr)
        elif args.command == "evaluate":
            reports = cmd_evaluate(cfg)
            print(
                f"evaluated {len(reports)} model/lead pair(s); "
                f"reports in {cfg.run_dir / 'reports'}"
            )
        else:
            out = cmd_run(cfg)
            print(f"run complete: {out}")
    except (AqrError, OSError) as exc:
        line = json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}, sort_keys=True
        )
        print(line, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

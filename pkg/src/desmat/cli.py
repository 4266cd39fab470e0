"""``desmat`` command-line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import KINDS, ConfigError, load_config
from .datasets import DatasetParseError
from . import experiments

EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="desmat", description="Sensing-matrix design and benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in KINDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment config file")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="output directory")
        s.add_argument("--plots", action="store_true", help="also write PNG plots")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _summary(command: str, result) -> str:
    if command == "sweep":
        return "\n".join(f"snr={r[0]:g} {r[1]}: r_H={r[2]:.4f}±{r[3]:.4f} r_W={r[4]:.4f}±{r[5]:.4f}"
                         for r in result.rows)
    if command == "image":
        return "\n".join(f"{k}: r_H={v[0]:.4f} r_W={v[1]:.4f}" for k, v in result.means().items())
    if command == "de-run":
        return f"iterations={result.trace.iterations} fixed_point={result.trace.fixed_point}"
    if command == "decode":
        return f"iterations={result.iterations} converged={result.converged}"
    if command == "sample-matrix":
        return f"ok={result['ok']}"
    return ""


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, kind=args.command)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        cfg.plots = cfg.plots or args.plots
        if args.command == "design":
            res, code = experiments.run_design(cfg)
            if res is not None:
                print(f"rate={res.achieved_rate:.6f} m={res.m} valid={res.valid}")
            return code
        runner = {
            "de-run": experiments.run_de,
            "sample-matrix": experiments.run_sample_matrix,
            "decode": experiments.run_decode,
            "sweep": experiments.run_sweep,
            "image": experiments.run_image_experiment,
        }[args.command]
        text = _summary(args.command, runner(cfg))
        if text:
            print(text)
        return 0
    except ConfigError as exc:
        print(f"desmat: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetParseError) as exc:
        print(f"desmat: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

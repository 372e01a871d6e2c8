"""
ISALT – Entry Point
Command line for generating data, inferring large-step schemes and
evaluating them.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import config as cfg
from errors import IsaltError
from experiment import Experiment, StudyKind, cmd_simulate, load_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=cfg.PROG_NAME, description="Inference-based large time-step schemes for SDEs")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {cfg.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, type=Path, help="experiment TOML")
        p.add_argument("--preset", choices=(cfg.PRESET_FULL, cfg.PRESET_DESK), help="rescale the run")
        p.add_argument("-o", "--output", type=Path, help="override output_dir")
        return p

    with_config("gen-data", "generate the long reference path and one dataset per gap")
    with_config("infer", "fit every configured family at every gap")
    with_config("evaluate", "simulate schemes and compare PDFs/ACFs with the reference")
    study = with_config("study", "convergence, residual-order or blow-up studies")
    study.add_argument("kind", choices=StudyKind.ALL)
    with_config("report", "summarize the run in report.txt")

    sim = sub.add_parser("simulate", help="simulate a saved scheme")
    sim.add_argument("-s", "--scheme", required=True, type=Path, help="scheme JSON")
    sim.add_argument("-n", "--steps", required=True, type=int)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--every", type=int, default=1, help="record every k-th step")
    sim.add_argument("-o", "--output", type=Path, help="output dataset file")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            out = cmd_simulate(args.scheme, args.steps, args.seed, args.output, record_every=args.every)
            print(f"✅ Path written to {out}")
            return cfg.EXIT_OK

        config = load_config(args.config, args.preset)
        if args.output:
            config = replace(config, output_dir=args.output)
        exp = Experiment(config)
        if args.command == "gen-data":
            exp.cmd_gen_data()
        elif args.command == "infer":
            exp.cmd_infer()
        elif args.command == "evaluate":
            exp.cmd_evaluate()
        elif args.command == "study":
            exp.cmd_study(args.kind)
        elif args.command == "report":
            exp.cmd_report()
    except IsaltError as exc:
        logging.getLogger(cfg.PROG_NAME).error("%s", exc)
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code
    return cfg.EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

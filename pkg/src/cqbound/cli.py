"""Command-line entry point: ``cqbound run | sweep-bits | topology | ledger``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import MODES, ScenarioConfig, load_config
from .errors import ConfigError, NumericalError
from .harness import read_csv, report_ledger, run_scenario, sweep_bits, write_csv
from .network import build_paper_topology, write_topology_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _config(path) -> ScenarioConfig:
    return load_config(path) if path else ScenarioConfig()


def _bit_list(text: str) -> list[int]:
    try:
        bits = [int(b) for b in text.split(",") if b.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad bit list {text!r}") from exc
    if not bits:
        raise ConfigError("bit list must not be empty")
    return bits


def cmd_run(args) -> None:
    cfg = _config(args.config)
    changes = {k: v for k, v in (("mode", args.mode), ("bits", args.bits), ("seed", args.seed),
                                 ("trials", args.trials), ("steps", args.steps),
                                 ("workers", args.workers)) if v is not None}
    cfg = cfg.replace(**changes)
    write_csv(run_scenario(cfg), args.out or sys.stdout)


def cmd_sweep(args) -> None:
    cfg = _config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    write_csv(sweep_bits(cfg, _bit_list(args.bits), include_raw=not args.no_raw), args.out or sys.stdout)


def cmd_topology(args) -> None:
    topology = build_paper_topology(_config(args.config))
    write_topology_csv(topology, args.out or sys.stdout)


def cmd_ledger(args) -> None:
    try:
        rows = read_csv(args.infile)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.infile}: {exc}") from exc
    sys.stdout.write(report_ledger(rows))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cqbound", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte-Carlo run of one mode")
    run.add_argument("--config")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--bits", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep-bits", help="quantized runs over several bit depths plus the raw baseline")
    sweep.add_argument("--config")
    sweep.add_argument("--bits", default="4,5,6,7,8")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--no-raw", action="store_true")
    sweep.add_argument("--out")
    sweep.set_defaults(func=cmd_sweep)

    topo = sub.add_parser("topology", help="dump sensor and node layout as CSV")
    topo.add_argument("--config")
    topo.add_argument("--out")
    topo.set_defaults(func=cmd_topology)

    ledger = sub.add_parser("ledger", help="communication report for a run CSV")
    ledger.add_argument("--in", dest="infile", required=True)
    ledger.set_defaults(func=cmd_ledger)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

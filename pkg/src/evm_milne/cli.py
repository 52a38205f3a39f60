#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command Line Interface

    evm run --config <path>
    evm verify --suite {identities|commutators|moments} --seed <u64> [--checks N]
    evm fixed-point [--config <path>]
    evm reduce {vlasov-only|maxwell-only} [--config <path>]

Exit codes: 0 on success, 1 when an acceptance gate fails, 2 on a module
or configuration error.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from . import __version__
from .config import RunConfig, default_log_level
from .errors import EVMError
from .harness import IDENTITY_CHECKS, SUITES, fixed_point, reduce, run_scenario, verify
from .models import SuiteResult

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_ERROR = 2


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evm",
        description="Einstein-Vlasov-Maxwell perturbations of the Milne model",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default=default_log_level(),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
        help="Logging verbosity (default: EVM_LOG_LEVEL or WARNING)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a configured scenario")
    run.add_argument("--config", required=True, help="Path to the TOML run configuration")

    check = commands.add_parser("verify", help="Run a randomized verification suite")
    check.add_argument("--suite", required=True, choices=list(SUITES))
    check.add_argument("--seed", type=_seed, default=0)
    check.add_argument("--checks", type=int, default=IDENTITY_CHECKS)

    fixed = commands.add_parser("fixed-point", help="Evolve exact Milne data")
    fixed.add_argument("--config", help="Optional TOML run configuration")

    reduction = commands.add_parser("reduce", help="Compare a run against its single-sector path")
    reduction.add_argument("kind", choices=["vlasov-only", "maxwell-only"])
    reduction.add_argument("--config", help="Optional TOML run configuration")
    return parser


def _print_result(result: SuiteResult) -> int:
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK if result["status"] == "pass" else EXIT_GATE_FAILED


def _load(path: Optional[str]) -> Optional[RunConfig]:
    return RunConfig.from_toml(path) if path else None


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the ``evm`` command."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            outcome = run_scenario(RunConfig.from_toml(args.config))
            print(json.dumps({"status": outcome.summary["status"], "exit_code": outcome.exit_code}))
            return outcome.exit_code
        if args.command == "verify":
            return _print_result(verify(args.suite, args.seed, args.checks))
        if args.command == "fixed-point":
            return _print_result(fixed_point(_load(args.config)))
        if args.command == "reduce":
            return _print_result(reduce(args.kind, _load(args.config)))
    except EVMError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.message)
        print(json.dumps({"error": exc.to_dict()}, default=str), file=sys.stderr)
        return EXIT_ERROR
    raise ValueError(f"Unsupported command: {args.command}")


if __name__ == "__main__":
    sys.exit(main())

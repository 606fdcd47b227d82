"""Command-line entry point: ``neumann-regularity <command> --config run.json``.

Exit codes: 0 success or consistent, 1 operational error, 2 scientific
contradiction (including a failed kernel check), 3 inconclusive under
``--decisive``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from pydantic import ValidationError

from regularity import __version__, commands
from regularity.artifacts import REPORT_NAME, resolve_output_dir, write_report
from regularity.commands import EXIT_ERROR, RunContext
from shared.errors import ConfigInvalid, RegularityError
from shared.logger import configure_logging, logger
from shared.types import Command, RunConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neumann-regularity",
        description="Decide boundary Lipschitz/differentiability of co-normal problems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--t-max", type=float, dest="t_max", help="horizon T in t = -log r")
    parser.add_argument("--order", type=int, help="half-sphere quadrature order")
    parser.add_argument("--seed", type=int, help="seed for randomized sampling")
    parser.add_argument(
        "--decisive", action="store_true", help="exit 3 when the verdict is Inconclusive"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    return parser


def load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}", module="cli") from exc
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigInvalid(f"{path}: {exc}", module="cli") from exc


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Flags win over the file; the result is validated again."""
    data: Dict[str, Any] = config.model_dump(mode="json")
    if args.t_max is not None:
        data["grid"]["t_max"] = args.t_max
    if args.order is not None:
        data["order"] = args.order
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(f"command-line override: {exc}", module="cli") from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose else "WARNING" if args.quiet else "INFO")

    try:
        config = apply_overrides(load_config(args.config), args)
        out_dir = resolve_output_dir(args.out, config)
        handler = getattr(commands, f"cmd_{args.command.replace('-', '_')}")
        report = handler(RunContext(config=config, out_dir=out_dir, decisive=args.decisive))
        report.artifacts.insert(0, REPORT_NAME)
        write_report(out_dir, report)
    except RegularityError as exc:
        logger.error("{}: {}", exc.module, exc)
        return EXIT_ERROR

    sys.stdout.write(report.model_dump_json(indent=2) + "\n")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())

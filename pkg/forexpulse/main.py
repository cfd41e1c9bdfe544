"""Command-line entry point."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from forexpulse.config import PipelineConfig, load_config
from forexpulse.errors import ConfigError, ForexPulseError
from forexpulse.pipeline.orchestrator import SUBCOMMANDS, run_pipeline
from forexpulse.pipeline.usergroups import load_group_rules

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"

# flag dest -> PipelineConfig field
OVERRIDES = {
    "tweets": "tweets",
    "rates": "rates",
    "events": "events",
    "audit": "audit",
    "model": "model",
    "out": "out",
    "group_rules": "group_rules",
    "groups": "groups",
    "theta": "theta",
    "horizon": "horizon",
    "window_days": "window_days",
    "seed": "seed",
    "folds": "folds",
    "cv_gap": "cv_gap",
    "dim": "dim",
    "lambda_": "lambda_reg",
    "epochs": "epochs",
    "audit_latest_wins": "audit_latest_wins",
    "author": "author",
    "log_level": "log_level",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ConfigError(message, module="cli")


def _options(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommand copies must not reset flags given before the subcommand
    options = _Parser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    options.add_argument("--config", type=Path, help="JSON config file (env FOREXPULSE_CONFIG)")
    options.add_argument("--tweets", type=Path)
    options.add_argument("--rates", type=Path)
    options.add_argument("--events", type=Path)
    options.add_argument("--audit", type=Path)
    options.add_argument("--model", type=Path)
    options.add_argument("--out", type=Path)
    options.add_argument("--group-rules", type=Path)
    options.add_argument("--groups", help="comma-separated groups, e.g. company,individual")
    options.add_argument("--theta", type=float)
    options.add_argument("--horizon", type=int)
    options.add_argument("--window-days", type=int)
    options.add_argument("--seed", type=int)
    options.add_argument("--folds", type=int)
    options.add_argument("--cv-gap", type=int)
    options.add_argument("--dim", type=int)
    options.add_argument("--lambda", dest="lambda_", type=float)
    options.add_argument("--epochs", type=int)
    options.add_argument("--audit-latest-wins", action="store_const", const=True)
    options.add_argument("--author", help="restrict deletion forensics to one account")
    options.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    options.add_argument("--show-config", action="store_true")
    return options


def build_parser() -> argparse.ArgumentParser:
    options = _options()
    after_command = _options(suppress=True)
    parser = _Parser(
        prog="forexpulse",
        description="EUR/USD Twitter stance, event-study and deletion-forensics pipeline",
        parents=[options],
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    for name in SUBCOMMANDS:
        commands.add_parser(name, parents=[after_command])
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {field: getattr(args, dest) for dest, field in OVERRIDES.items()}


def _configure(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config, _overrides(args))
    if args.command == "synth" and args.seed is not None:
        config = config.model_copy(
            update={"synth": config.synth.model_copy(update={"seed": args.seed})}
        )
    return config


def show_config(config: PipelineConfig) -> str:
    rules = load_group_rules(config.group_rules)
    payload = {
        "config": config.model_dump(mode="json"),
        "group_rules": rules.model_dump(mode="json"),
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and return its exit status.

    Args:
        argv: Arguments without the program name; defaults to sys.argv

    Returns:
        0 on success, 1 on configuration errors, 2 on data errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _configure(args)
    except ForexPulseError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )

    if args.show_config:
        try:
            print(show_config(config))
        except ForexPulseError as e:
            print(f"error: {e}", file=sys.stderr)
            return e.exit_code
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return ConfigError.exit_code

    run = run_pipeline(config, args.command)
    if run.error:
        print(f"error: {run.error}", file=sys.stderr)
    return run.exit_code


if __name__ == "__main__":
    sys.exit(main())

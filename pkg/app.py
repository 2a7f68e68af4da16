#!/usr/bin/env python3
"""Command-line entry point: verify, audit, toy, train, eval"""

import argparse
import sys

from config import Config

# BLAS reads its thread count when numpy is first imported
Config.apply_thread_cap()

from commands import audit, evaluate, toy, train, verify  # noqa: E402
from errors import CheckpointError, ConfigError, CropeError, DataError, TrainingError  # noqa: E402

COMMANDS = (verify, audit, toy, train, evaluate)

EXIT_FAILED = 1
EXIT_INPUT = 2


def create_parser() -> argparse.ArgumentParser:
    """Parser factory"""
    parser = argparse.ArgumentParser(
        prog='crope',
        description='Complex-tied rotary attention: verification, audit and training runs')
    parser.add_argument('--version', action='version', version=f'%(prog)s {Config.VERSION}')
    subparsers = parser.add_subparsers(dest='command', required=True)

    # Register commands
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv=None) -> int:
    args = create_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, DataError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_INPUT
    except CropeError as e:
        print(f"✗ {e}", file=sys.stderr)
        if isinstance(e, TrainingError) and e.checkpoint_path:
            print(f"  State at step {e.step} saved to {e.checkpoint_path}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())

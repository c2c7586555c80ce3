#!/usr/bin/env python3
"""
reflectkit Command Line Interface

Every command reads a configuration file; flags given here override its
``[run]`` section. It can be invoked using:
    python -m reflectkit simulate --config quadrant.cfg
    reflectkit planet clustering-curve --config planet.cfg --seed 7
"""

import argparse
import logging
import sys

from . import __version__
from .config import COMMANDS, PLANET_MODES, parse_config
from .errors import ConfigError
from .runner import EXIT_PARSE, EXIT_UNEXPECTED, run


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', required=True, help='configuration file')
    parser.add_argument('--seed', type=int, help='root seed (overrides [run] seed)')
    parser.add_argument('--out', help='output directory (overrides [run] out)')
    parser.add_argument('--workers', type=int, help='worker threads (overrides [run] workers)')
    parser.add_argument('--format', choices=('csv', 'jsonl'), help='table format')
    parser.add_argument('--override-integrability', action='store_true',
                        help='sample even when integrability is not established')
    parser.add_argument('-v', '--verbose', action='store_true', help='Enable verbose output')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='reflectkit',
        description='Reflected diffusions in constrained domains and their Gibbs measures',
        epilog='Example: python -m reflectkit simulate --config quadrant.cfg'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        if command == 'planet':
            continue
        _common(sub.add_parser(command))
    planet = sub.add_parser('planet', help='particle clustering on a planet')
    planet.add_argument('mode', choices=PLANET_MODES)
    _common(planet)
    return parser


def main(argv=None) -> int:
    """Main entry point for command-line execution."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits on --help, --version and usage errors
        return EXIT_PARSE if e.code else 0

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='[%(levelname)s] %(name)s: %(message)s', stream=sys.stderr)

    try:
        with open(args.config, 'r', encoding='utf-8') as f:
            text = f.read()
    except UnicodeDecodeError:
        print(f"Error: Could not read '{args.config}' as UTF-8 text.", file=sys.stderr)
        return EXIT_PARSE
    except OSError as e:
        print(f"Error reading file '{args.config}': {e}", file=sys.stderr)
        return EXIT_PARSE

    overrides = {
        'command': args.command,
        'mode': getattr(args, 'mode', None),
        'seed': args.seed,
        'out': args.out,
        'workers': args.workers,
        'format': args.format,
        'override_integrability': args.override_integrability,
    }
    try:
        config = parse_config(text, overrides)
    except ConfigError as e:
        print(f"Error in '{args.config}': {e}", file=sys.stderr)
        return EXIT_PARSE
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_UNEXPECTED

    if args.verbose:
        for unit in config.plan():
            logging.getLogger(__name__).debug("planned: %s", unit)
    return run(config, verbose=args.verbose)


if __name__ == '__main__':
    sys.exit(main())

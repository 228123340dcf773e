"""``cwce-lab`` command line.

Exit codes: 0 success, 1 validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import ConfigError, CwceLabError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cwce-lab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(harness.COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides 'outputs' in the config)")
    parser.add_argument("--threads", type=int, help=f"worker threads (the {harness.THREADS_ENV} variable wins)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = harness.load_config(args.config)
        manifest = harness.COMMANDS[args.command](cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"cwce-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CwceLabError as exc:
        print(f"cwce-lab: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    failures = manifest.get("failures", 0)
    print(f"cwce-lab {args.command}: {len(manifest['artifacts'])} artifacts, {failures} failures")
    return EXIT_VALIDATION if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

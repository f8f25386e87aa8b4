"""
Command-line entry point.

    dollardlab run <suite> --config cfg.toml [--set key=value ...] [--out dir] [--strict] [--parallel]
    dollardlab audit --config cfg.toml [--set key=value ...]
    dollardlab list-suites

Exit status: 0 when every check passes, 1 when any check fails (or is
inconclusive), 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError
from .experiments import SUITES, ExperimentConfig, audit_config, emit_report, run_suite

logger = logging.getLogger("dollardlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="dollardlab", description="Desk-scale scattering and wave-front experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one suite")
    run.add_argument("suite", help="suite name (see list-suites)")
    run.add_argument("--config", required=True, help="TOML configuration file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a dotted key")
    run.add_argument("--out", default=None, help="output directory (default: output.dir)")
    run.add_argument("--strict", action="store_true", help="treat inconclusive checks and boundary loss as failures")
    run.add_argument("--parallel", action="store_true", help="run independent seeds concurrently")

    audit = sub.add_parser("audit", help="check a configuration against the model assumptions")
    audit.add_argument("--config", required=True)
    audit.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    audit.add_argument("--out", default=None)

    sub.add_parser("list-suites", help="print the available suites")
    return parser


def _print_checks(result, stream):
    for c in result.checks:
        print(f"{c.status.upper():13s} {c.name}", file=stream)
    print(f"{result.suite}: {result.status} (config {result.config_hash[:12]}, {result.wall_clock:.2f} s)", file=stream)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "list-suites":
        for name, (_, desc) in SUITES.items():
            print(f"{name:20s} {desc}")
        return EXIT_OK
    try:
        cfg = ExperimentConfig.from_file(args.config, args.set)
        if args.command == "audit":
            result = audit_config(cfg)
        else:
            if args.suite not in SUITES:
                raise ConfigurationError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
            result = run_suite(args.suite, cfg, parallel=args.parallel, strict=args.strict)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.get("output.dir")
    for path in emit_report(result, out):
        logger.info("wrote %s", path)
    _print_checks(result, sys.stdout)
    return EXIT_OK if result.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

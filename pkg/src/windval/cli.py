"""Command-line entry point: ``windval <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

from . import __version__, pipeline
from .config import load_config
from .errors import ConfigError, DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="run configuration (YAML)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windval", description="Wind power simulation and validation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate generation for every fleet record")
    _add_config(p)
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default: ${pipeline.WORKERS_ENV} or 1)")

    p = sub.add_parser("clean", help="clean observed series")
    _add_config(p)
    p.add_argument("--audit", action="store_true", help="also write each series as it was before cleaning")

    p = sub.add_parser("validate", help="score simulations against cleaned observations")
    _add_config(p)

    p = sub.add_parser("report", help="notch significance between configurations")
    _add_config(p)

    p = sub.add_parser("run", help="simulate, clean, validate and report in one go")
    _add_config(p)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("capacity-check", help="cumulative fleet capacity against a yearly reference")
    p.add_argument("fleet", type=Path)
    p.add_argument("reference", type=Path, help="CSV with columns year,capacity_mw")
    p.add_argument("-o", "--output", type=Path, default=None, help="write the ratio table here")

    p = sub.add_parser("make-fixture", help="write a small synthetic run directory")
    p.add_argument("directory", type=Path)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _print_rows(rows: list[dict]) -> None:
    if not rows:
        return
    cols = list(rows[0])
    print(",".join(cols))
    for r in rows:
        print(",".join("" if r[c] is None else (f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c])) for c in cols))


def run(args: argparse.Namespace) -> int:
    if args.command == "capacity-check":
        _print_rows(pipeline.cmd_capacity_check(args.fleet, args.reference, args.output))
        return EXIT_OK
    if args.command == "make-fixture":
        from .synthetic import write_fixture

        print(write_fixture(args.directory, seed=args.seed))
        return EXIT_OK

    cfg = load_config(args.config)
    if args.command in ("simulate", "run"):
        manifest = pipeline.cmd_simulate(cfg, args.workers)
        print(f"simulate: {len(manifest['files'])} series, config {manifest['config_hash'][:12]}")
    if args.command in ("clean", "run"):
        res = pipeline.cmd_clean(cfg, getattr(args, "audit", False))
        print("clean: " + ", ".join(f"{r['rule']}={r['remaining']}" for r in res["attrition"]))
    if args.command in ("validate", "run"):
        rows = pipeline.cmd_validate(cfg)
        print(f"validate: {len(rows)} metric rows")
    if args.command in ("report", "run"):
        rows = pipeline.cmd_report(cfg)
        print(f"report: {len(rows)} comparisons")
    return EXIT_OK


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (DataError, FileNotFoundError) as exc:
        return _fail(EXIT_DATA, "data", exc)
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            traceback.print_exc()
        return _fail(EXIT_INTERNAL, "internal", exc)


if __name__ == "__main__":
    sys.exit(main())

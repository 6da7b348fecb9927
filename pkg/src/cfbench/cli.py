"""``bench`` command line: run a benchmark config, print reports, list catalogs."""
from __future__ import annotations

import argparse
import logging
import sys

from . import bench, catalog
from .recourse import METHODS


def _cmd_run(args) -> int:
    try:
        cfg = bench.load_config(args.config)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outcome = bench.run(cfg, args.out)
    for r in outcome.records:
        status = "ok" if r.error is None else f"FAILED ({r.error})"
        print(f"{r.dataset}/{r.model_arch}/{r.method}: {status}")
    return outcome.exit_code


def _cmd_report(args) -> int:
    try:
        records = bench.read_records(args.dir)
    except (OSError, ValueError) as exc:
        print(f"cannot read records from {args.dir}: {exc}", file=sys.stderr)
        return 1
    print(bench.format_report(records, args.format))
    return 0


def _cmd_list_methods(args) -> int:
    for name, spec in sorted(METHODS.items()):
        needs = ",".join(sorted(spec.needs)) or "-"
        print(f"{name:16s} {spec.family:13s} needs={needs:6s} {spec.summary}")
    return 0


def _cmd_list_datasets(args) -> int:
    for name in catalog.list_datasets():
        state = "available" if catalog.is_available(name) else f"missing (set {catalog.DATA_ENV})"
        print(f"{name:14s} {state}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bench", description="Benchmark counterfactual explanation methods.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every dataset x model x method cell of a config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)
    rep = sub.add_parser("report", help="print the records of a finished run")
    rep.add_argument("--dir", required=True)
    rep.add_argument("--format", choices=("csv", "json", "md"), default="md")
    rep.set_defaults(func=_cmd_report)
    sub.add_parser("list-methods", help="show registered methods").set_defaults(func=_cmd_list_methods)
    sub.add_parser("list-datasets", help="show catalog data sets").set_defaults(func=_cmd_list_datasets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

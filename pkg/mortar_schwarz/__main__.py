"""Command-line interface for mortar-schwarz."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from typing import Any, Optional

from mortar_schwarz import __version__
from mortar_schwarz.experiments import (
    TABLES,
    ExperimentConfig,
    Histogram,
    RunRecord,
    load_config,
    run_histogram,
    run_table,
)
from mortar_schwarz.utils import HISTOGRAM_COLUMNS, format_table

# Columns shown in the text report
REPORT_COLUMNS = [
    "subdomains",
    "mortar",
    "alpha_c",
    "alpha_i",
    "type",
    "policy",
    "kappa",
    "iterations",
    "total_eigenfunctions",
    "error",
]


def print_report(records: list[RunRecord], json_output: bool) -> None:
    """Print a formatted report of the runs."""
    if json_output:
        print(json.dumps([r.to_dict() for r in records], indent=2))
        return

    print("\n" + "=" * 60)
    print("ENRICHED AVERAGE SCHWARZ REPORT")
    print("=" * 60)
    print()
    print(format_table([r.to_dict() for r in records], REPORT_COLUMNS))

    failed = [r for r in records if not r.ok]
    if failed:
        print(f"\n{len(failed)} of {len(records)} run(s) failed")
    else:
        print(f"\nAll {len(records)} run(s) completed")
    print("=" * 60)


def print_histogram(histogram: Histogram, json_output: bool) -> None:
    """Print per-subdomain eigenfunction counts."""
    if json_output:
        result = {
            "type": histogram.type,
            "counts": list(histogram.counts),
            "total": histogram.total,
            "max": histogram.max_count,
        }
        print(json.dumps(result, indent=2))
        return

    rows = [dict(zip(HISTOGRAM_COLUMNS, row)) for row in histogram.rows()]
    print(format_table(rows, HISTOGRAM_COLUMNS))
    print(
        f"\nType {histogram.type}: {histogram.total} eigenfunctions, "
        f"at most {histogram.max_count} per subdomain"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mortar-schwarz",
        description=(
            "Condition numbers and PCG iterations of the average Schwarz method "
            "with enriched coarse spaces on nonmatching mortar grids"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  mortar-schwarz --subdomains 3 3 --cells 4 --cells-alt 6
  mortar-schwarz --type 1 --fixed 3 --alpha-c 1e3 --alpha-i 1e4
  mortar-schwarz --table 2 --out results/table2.csv
  mortar-schwarz --histogram --type 2 --out results/histogram.csv
  mortar-schwarz --config run.json --json > record.json
        """,
    )

    parser.add_argument("--config", help="JSON file with configuration fields")
    parser.add_argument(
        "--subdomains",
        nargs=2,
        type=int,
        metavar=("NX", "NY"),
        help="Subdomains in x and y (default: 6 6)",
    )
    parser.add_argument(
        "--cells", type=int, help="Cells per subdomain edge (default: 6)"
    )
    parser.add_argument(
        "--cells-alt",
        type=int,
        help="Cells per edge of the alternating subdomains (default: 9)",
    )
    parser.add_argument(
        "--layout",
        choices=["checkerboard", "uniform"],
        help="How the two resolutions are distributed (default: checkerboard)",
    )
    parser.add_argument(
        "--matching",
        action="store_true",
        default=None,
        help="Allow equal resolutions on both sides of every interface",
    )
    parser.add_argument(
        "--mortar",
        choices=["coarse", "fine"],
        help="Which side of an interface is the mortar (default: coarse)",
    )
    parser.add_argument("--alpha-b", type=float, help="Background coefficient")
    parser.add_argument("--alpha-c", type=float, help="Corner channel coefficient")
    parser.add_argument("--alpha-i", type=float, help="Crossing channel coefficient")
    parser.add_argument(
        "--channel-width", type=float, help="Channel width in fine cells (default: 1)"
    )
    parser.add_argument(
        "--type", choices=["1", "2"], help="Enrichment type I or II (default: 2)"
    )

    policy = parser.add_mutually_exclusive_group()
    policy.add_argument(
        "--threshold", type=float, help="Keep eigenvalues above TAU (default: 50)"
    )
    policy.add_argument(
        "--fixed", type=int, help="Keep M eigenfunctions in every subdomain"
    )
    policy.add_argument(
        "--full", action="store_true", help="Keep every local eigenfunction"
    )
    policy.add_argument(
        "--no-enrichment",
        action="store_true",
        help="Averaging coarse space only",
    )

    parser.add_argument("--tol", type=float, help="PCG tolerance (default: 5e-6)")
    parser.add_argument("--max-iter", type=int, help="PCG iteration cap")
    parser.add_argument(
        "--residual",
        choices=["relative", "preconditioned"],
        help="PCG stopping measure (default: relative)",
    )
    parser.add_argument(
        "--kappa",
        choices=["auto", "dense", "lanczos", "none"],
        help="Condition number method (default: auto)",
    )
    parser.add_argument(
        "--preconditioner",
        choices=["reference", "blockwise"],
        help="Form of the coarse solve (default: blockwise)",
    )
    parser.add_argument(
        "--baseline",
        action="store_true",
        default=None,
        help="Also report the condition number of the unpreconditioned matrix",
    )
    parser.add_argument(
        "--no-verify",
        action="store_true",
        help="Skip the symmetry check and the direct-solve comparison",
    )
    parser.add_argument("--seed", type=int, help="Seed for the random check vectors")
    parser.add_argument(
        "--export", metavar="DIR", help="Write spectra, coefficient field and matrix"
    )

    mode = parser.add_mutually_exclusive_group()
    mode.add_argument(
        "--table", type=int, choices=sorted(TABLES), help="Run a preset sweep"
    )
    mode.add_argument(
        "--histogram",
        action="store_true",
        help="Per-subdomain eigenfunction counts of the threshold selection",
    )

    parser.add_argument("--out", help="CSV destination (JSON is written alongside)")
    parser.add_argument("--json", action="store_true", help="Output results as JSON")
    parser.add_argument(
        "--verbose",
        "-v",
        action="count",
        default=0,
        help="Show progress (-v) or debug details (-vv)",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
        help="Show version and exit",
    )
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """The file config (or defaults) with explicit flags applied."""
    base = load_config(args.config) if args.config else ExperimentConfig()
    overrides: dict[str, Any] = {
        "subdomains": args.subdomains,
        "cells": args.cells,
        "cells_alt": args.cells_alt,
        "layout": args.layout,
        "matching": args.matching,
        "mortar": args.mortar,
        "alpha_b": args.alpha_b,
        "alpha_c": args.alpha_c,
        "alpha_i": args.alpha_i,
        "channel_width": args.channel_width,
        "type": {"1": "I", "2": "II"}.get(args.type) if args.type else None,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "residual": args.residual,
        "kappa_method": args.kappa,
        "preconditioner": args.preconditioner,
        "baseline": args.baseline,
        "verify": False if args.no_verify else None,
        "seed": args.seed,
        "export_dir": args.export,
    }
    if args.threshold is not None:
        overrides.update(policy="threshold", threshold=args.threshold)
    elif args.fixed is not None:
        overrides.update(policy="fixed", fixed=args.fixed)
    elif args.full:
        overrides["policy"] = "full"
    elif args.no_enrichment:
        overrides["policy"] = "none"
    return base.merged(overrides)


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point for the CLI."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        config = config_from_args(args)

        if args.histogram:
            print_histogram(run_histogram(config, args.out), args.json)
            return 0

        if args.table:
            configs = TABLES[args.table](replace(config, export_dir=None))
        else:
            configs = [config]
        records = run_table(configs, args.out)
        print_report(records, args.json)

        # Exit with error code if any run failed
        return 0 if all(r.ok for r in records) else 1

    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line for the figure scripts.

Each subcommand reads one CSV in the documented schema and writes one
image into the output directory.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .plots import (
    plot_error_vs_corruption,
    plot_error_vs_num_devices,
    plot_learning_curves,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedgraph-figures",
        description="Render benchmark figures from fedgraph result CSVs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, csv_help: str):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("csv", help=csv_help)
        cmd.add_argument("--out-dir", default="figures-out", help="image output directory")
        cmd.add_argument("--format", default="png", choices=("png", "svg"))
        cmd.add_argument(
            "--methods", default=None,
            help="comma-separated method names to draw (default: all present)",
        )
        return cmd

    add("error-vs-devices", "error against device count, panels by (n, corruption)",
        "sweep results.csv")
    add("error-vs-corruption", "error against corruption level, panels by (n, devices)",
        "sweep results.csv")
    curves = add("learning-curves", "estimation error against iteration", "bench.csv trace")
    curves.add_argument("--linear-y", action="store_true", help="linear instead of log y axis")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = _build_parser().parse_args(argv)
    methods = args.methods.split(",") if args.methods else None
    out_dir = Path(args.out_dir)
    try:
        if args.command == "error-vs-devices":
            out = plot_error_vs_num_devices(
                args.csv, out_dir / f"error_vs_devices.{args.format}", methods
            )
        elif args.command == "error-vs-corruption":
            out = plot_error_vs_corruption(
                args.csv, out_dir / f"error_vs_corruption.{args.format}", methods
            )
        else:
            out = plot_learning_curves(
                args.csv,
                out_dir / f"learning_curves.{args.format}",
                methods,
                log_y=not args.linear_y,
            )
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: ``synth`` (materialize a synthetic dataset directory),
``solve`` (one solver run), ``select-edges`` (edge-selection report),
``sweep`` (experiment grid), ``bench`` (learning-curve comparison), and
``ingest`` (validate a dataset directory).

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .admm import run
from .baselines import fit_all
from .config import ConfigError, RunConfig, parse_config
from .datasets import ingest_dataset, materialize_dataset
from .edge_selection import evaluate_edges, write_report_csv
from .experiment import (
    _availability_model,
    _solver_config,
    bench_learning_curves,
    run_experiment,
)
from .graph import build_graph, read_graph_text, write_graph_text
from .linalg import NumericError
from .penalty import objective
from .synth import SynthConfig, build_dataset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedgraph",
        description="Graph-structured heterogeneous federated M-estimation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, out_default: str | None = "results"):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON run configuration")
        cmd.add_argument("--out", default=None, help="output directory (overrides out_dir)")
        cmd.add_argument("--seed", type=int, default=None, help="override the master seed")
        cmd.add_argument("--threads", type=int, default=1, help="worker threads for grids")
        return cmd

    add("synth", "generate a synthetic dataset directory")
    solve = add("solve", "run the solver once and write the averaged estimate")
    solve.add_argument("--trace", action="store_true", help="also write an objective trace CSV")
    add("select-edges", "run edge selection and write the report")
    add("sweep", "run the experiment grid and write results.csv")
    add("bench", "learning-curve comparison against (S)GD")
    add("ingest", "validate a dataset directory")
    return parser


def _load_config(args) -> RunConfig:
    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, out_dir=args.out)
    return config


def _load_problem(config: RunConfig):
    """Returns (graph or None, specs, data, theta_star or None)."""
    if config.synth is not None:
        ds = build_dataset(
            SynthConfig(
                num_devices=config.synth.num_devices,
                clusters=config.synth.clusters,
                dim=config.synth.dim,
                samples_per_device=config.synth.samples_per_device,
                family=config.synth.family,
                sigma=config.synth.sigma,
                corruption=config.synth.corruption,
                seed=config.seed,
            )
        )
        return ds.graph, ds.specs, ds.data, ds.theta_star
    if config.ingest is None:
        raise ConfigError("data_dir runs require an ingest block")
    data, specs, excluded = ingest_dataset(
        config.data_dir,
        config.ingest.family,
        config.ingest.dim,
        config.ingest.sigma,
        config.ingest.min_samples,
    )
    for name, count in excluded:
        print(f"warning: excluded {name} ({count} samples below minimum)", file=sys.stderr)
    graph_path = Path(config.data_dir) / "graph.txt"
    graph = read_graph_text(graph_path) if graph_path.is_file() else None
    return graph, specs, data, None


def _cmd_synth(args) -> int:
    config = _load_config(args)
    if config.synth is None:
        raise ConfigError("synth requires a synth block")
    ds = build_dataset(
        SynthConfig(
            num_devices=config.synth.num_devices,
            clusters=config.synth.clusters,
            dim=config.synth.dim,
            samples_per_device=config.synth.samples_per_device,
            family=config.synth.family,
            sigma=config.synth.sigma,
            corruption=config.synth.corruption,
            seed=config.seed,
        )
    )
    out = materialize_dataset(ds, config.out_dir)
    print(f"wrote dataset ({ds.config.num_devices} devices) to {out}")
    return 0


def _cmd_solve(args) -> int:
    config = _load_config(args)
    graph, specs, data, _theta_star = _load_problem(config)
    if graph is None:
        raise ConfigError("solve requires a graph (synth block or graph.txt in data_dir)")
    min_n = min(d.n for d in data)
    solver_cfg = _solver_config(config, config.solver.lam, min_n, config.seed)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    trace_rows = []
    every = max(1, solver_cfg.iterations // 500)

    def grab(t, theta_bar, _state):
        value = objective(graph, specs, data, theta_bar, solver_cfg.lam, solver_cfg.norm)
        trace_rows.append({"t": t, "objective": f"{value:.12g}"})

    callback = grab if args.trace else None
    model = _availability_model(config, graph.num_nodes)
    result = run(
        graph, specs, data, solver_cfg,
        availability=model, callback=callback, callback_every=every,
    )
    np.savetxt(out / "theta_bar.csv", result.theta_bar, delimiter=",", fmt="%.12g")
    final = objective(graph, specs, data, result.theta_bar, solver_cfg.lam, solver_cfg.norm)
    if args.trace and trace_rows:
        with open(out / "trace.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "objective"])
            writer.writeheader()
            writer.writerows(trace_rows)
    print(f"objective {final:.6g}; wrote {out / 'theta_bar.csv'}")
    return 0


def _cmd_select_edges(args) -> int:
    config = _load_config(args)
    graph, specs, data, _ = _load_problem(config)
    fits = fit_all(specs, data)
    alpha = config.selection.alpha
    if config.selection.candidates == "all_pairs" or graph is None:
        num = len(fits)
        candidates = build_graph(
            num, [(i, j) for i in range(1, num + 1) for j in range(i + 1, num + 1)]
        )
    else:
        candidates = graph
    report = evaluate_edges(candidates, fits, alpha)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv")
    selected = report.selected_graph()
    write_graph_text(selected, out / "selected_graph.txt")
    print(
        f"kept {selected.num_edges} of {candidates.num_edges} edges at alpha={alpha}; "
        f"wrote {out / 'report.csv'}"
    )
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    rows = run_experiment(config, threads=args.threads, log=lambda msg: print(msg, file=sys.stderr))
    print(f"{len(rows)} result rows in {Path(config.out_dir) / 'results.csv'}")
    return 0


def _cmd_bench(args) -> int:
    config = _load_config(args)
    rows = bench_learning_curves(config, log=lambda msg: print(msg, file=sys.stderr))
    print(f"{len(rows)} trace rows in {Path(config.out_dir) / 'bench.csv'}")
    return 0


def _cmd_ingest(args) -> int:
    config = _load_config(args)
    if config.data_dir is None:
        raise ConfigError("ingest requires data_dir")
    if config.ingest is None:
        raise ConfigError("ingest requires an ingest block")
    data, specs, excluded = ingest_dataset(
        config.data_dir,
        config.ingest.family,
        config.ingest.dim,
        config.ingest.sigma,
        config.ingest.min_samples,
    )
    for name, count in excluded:
        print(f"warning: excluded {name} ({count} samples below minimum)", file=sys.stderr)
    counts = [d.n for d in data]
    print(
        f"{len(data)} devices loaded ({config.ingest.family}, p={config.ingest.dim}); "
        f"samples per device: min {min(counts)}, max {max(counts)}"
    )
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "solve": _cmd_solve,
    "select-edges": _cmd_select_edges,
    "sweep": _cmd_sweep,
    "bench": _cmd_bench,
    "ingest": _cmd_ingest,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

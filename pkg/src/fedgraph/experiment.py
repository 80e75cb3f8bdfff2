"""Experiment orchestration: cross-validation, sweeps, and benchmarks.

Every (cell, replication) derives its seeds from the master seed through
keyed streams, so results are byte-identical for a fixed configuration no
matter how many worker threads execute the grid.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rng_mod
from .admm import SolverConfig, reference_minimizer, run
from .availability import AvailabilityModel, run_with_availability
from .baselines import (
    avg_sq_error,
    fit_all,
    global_estimate,
    local_all,
    subgradient_solver,
)
from .config import ConfigError, RunConfig, config_hash
from .datasets import ingest_dataset
from .edge_selection import evaluate_edges, local_es_candidate_graph
from .graph import DeviceGraph, connected_components, read_graph_text
from .models import DeviceData, ModelSpec, empirical_risk
from .synth import SynthConfig, SynthDataset, build_dataset

__all__ = [
    "cross_validate_lambda",
    "consensus_lambda_max",
    "run_experiment",
    "run_accuracy_experiment",
    "bench_learning_curves",
    "RESULT_COLUMNS",
]

RESULT_COLUMNS = (
    "method",
    "num_devices",
    "n",
    "K",
    "p",
    "rho_corrupt",
    "rep",
    "error",
    "seed",
    "cell",
    "config_hash",
)


def _is_consensus(g: DeviceGraph, theta: np.ndarray, tol: float) -> bool:
    clustering, _ = connected_components(g)
    labels = np.array(clustering.labels)
    scale = 1.0 + float(np.abs(theta).max(initial=0.0))
    for label in np.unique(labels):
        rows = theta[labels == label]
        if rows.shape[0] < 2:
            continue
        spread = np.abs(rows - rows[0]).max()
        if spread > tol * scale:
            return False
    return True


def consensus_lambda_max(
    g: DeviceGraph,
    specs,
    data: Sequence[DeviceData],
    *,
    tol: float = 1e-6,
    solver_tol: float = 1e-7,
) -> float:
    """Smallest penalty weight that drives the reference solution to
    per-component consensus, found by doubling then bisection."""
    if g.num_edges == 0:
        return 0.0
    # the solver's residual tolerance leaves a spread of a few solver_tol
    # even at full consensus, so the check must sit safely above it
    check_tol = max(tol, 50.0 * solver_tol)
    lam = 1e-3
    for _ in range(40):
        theta = reference_minimizer(g, specs, data, lam, tol=solver_tol).theta
        if _is_consensus(g, theta, check_tol):
            break
        lam *= 2.0
    else:
        raise ConfigError("consensus probe did not terminate; data scale is extreme")
    lo, hi = lam / 2.0, lam
    for _ in range(12):
        mid = math.sqrt(lo * hi)
        theta = reference_minimizer(g, specs, data, mid, tol=solver_tol).theta
        if _is_consensus(g, theta, check_tol):
            hi = mid
        else:
            lo = mid
    return hi


def _drop_rows(data: DeviceData, idx: np.ndarray) -> tuple[DeviceData, DeviceData]:
    """Split one device into (kept, held-out) by the held-out index set."""
    mask = np.ones(data.n, dtype=bool)
    mask[idx] = False
    if data.points is not None:
        return (
            DeviceData.from_points(data.points[mask]),
            DeviceData.from_points(data.points[~mask]),
        )
    return (
        DeviceData.from_xy(data.covariates[mask], data.responses[mask]),
        DeviceData.from_xy(data.covariates[~mask], data.responses[~mask]),
    )


def cross_validate_lambda(
    g: DeviceGraph,
    specs,
    data: Sequence[DeviceData],
    grid: Sequence[float] | None = None,
    folds: int = 5,
    *,
    seed: int = 0,
    solver_tol: float = 1e-7,
) -> float:
    """Pick the penalty weight by per-device K-fold cross-validation.

    The default grid is 10 log-spaced points from 1e-4 times the consensus
    threshold up to the threshold itself; the score is the mean held-out
    loss over devices and folds; ties go to the smaller value.
    """
    if min(d.n for d in data) < folds:
        raise ConfigError(f"every device needs at least {folds} samples for {folds}-fold CV")
    spec_list = specs if not isinstance(specs, ModelSpec) else [specs] * g.num_nodes
    if grid is None:
        lam_max = consensus_lambda_max(g, spec_list, data, solver_tol=solver_tol)
        if lam_max <= 0.0:
            return 0.0
        grid = np.geomspace(1e-4 * lam_max, lam_max, 10)
    grid = [float(v) for v in grid]
    if len(grid) == 1:
        return grid[0]

    fold_indices: list[list[np.ndarray]] = []
    for u, device in enumerate(data):
        perm = rng_mod.substream(seed, rng_mod.DOMAIN_CV, u).permutation(device.n)
        fold_indices.append([chunk for chunk in np.array_split(perm, folds)])

    best_lam, best_score = None, math.inf
    for lam in sorted(grid):
        fold_scores = []
        for fold in range(folds):
            train, holdout = [], []
            for u, device in enumerate(data):
                kept, held = _drop_rows(device, fold_indices[u][fold])
                train.append(kept)
                holdout.append(held)
            theta = reference_minimizer(g, spec_list, train, lam, tol=solver_tol).theta
            losses = [
                empirical_risk(spec_list[u], holdout[u], theta[u])
                for u in range(len(data))
            ]
            fold_scores.append(float(np.mean(losses)))
        score = float(np.mean(fold_scores))
        if score < best_score:
            best_score, best_lam = score, lam
    return best_lam


def _derived_seed(master: int, *path: int) -> int:
    return int(rng_mod.substream(master, rng_mod.DOMAIN_EXPERIMENT, *path).integers(2**62))


def _sweep_cells(config: RunConfig) -> list[dict]:
    """Cartesian product of the sweep axes over the base synth block."""
    assert config.synth is not None
    axes = {
        "num_devices": config.sweep.get("num_devices", (config.synth.num_devices,)),
        "samples_per_device": config.sweep.get(
            "samples_per_device", (config.synth.samples_per_device,)
        ),
        "corruption": config.sweep.get("corruption", (config.synth.corruption,)),
        "lambda": config.sweep.get("lambda", (None,)),
    }
    cells = []
    for num_devices in axes["num_devices"]:
        for n in axes["samples_per_device"]:
            for corruption in axes["corruption"]:
                for lam in axes["lambda"]:
                    cells.append(
                        dict(
                            num_devices=int(num_devices),
                            samples_per_device=int(n),
                            corruption=float(corruption),
                            lam=None if lam is None else float(lam),
                        )
                    )
    return cells


def _cell_dataset(config: RunConfig, cell: dict, seed: int) -> SynthDataset:
    synth = config.synth
    return build_dataset(
        SynthConfig(
            num_devices=cell["num_devices"],
            clusters=synth.clusters,
            dim=synth.dim,
            samples_per_device=cell["samples_per_device"],
            family=synth.family,
            sigma=synth.sigma,
            corruption=cell["corruption"],
            seed=seed,
        )
    )


def _solver_config(config: RunConfig, lam: float, n: int, seed: int) -> SolverConfig:
    solver = config.solver
    return SolverConfig(
        iterations=solver.iterations,
        lam=lam,
        rho=solver.rho,
        kappa=solver.kappa,
        batch_size=min(solver.batch_size, n),
        norm=solver.norm,
        seed=seed,
        projection_radius=solver.projection_radius,
        variant=solver.variant,
    )


def _availability_model(config: RunConfig, num_devices: int) -> AvailabilityModel | None:
    block = config.availability
    if isinstance(block.p, tuple):
        probs = np.array(block.p, dtype=np.float64)
        if probs.shape[0] != num_devices:
            raise ConfigError(
                f"availability.p: {probs.shape[0]} entries for {num_devices} devices"
            )
    else:
        if block.p >= 1.0:
            return None
        probs = np.full(num_devices, block.p)
    return AvailabilityModel(probs=probs, known=block.known, mode=block.mode)


def _method_graph(method: str, ds: SynthDataset, alpha: float):
    if method == "oracle":
        return ds.graph0
    if method == "fed_admm":
        return ds.graph
    if method == "fed_admm_es":
        fits = fit_all(ds.specs, ds.data)
        return evaluate_edges(ds.graph, fits, alpha).selected_graph()
    if method == "fed_admm_local_es":
        fits = fit_all(ds.specs, ds.data)
        return local_es_candidate_graph(fits, alpha)
    raise ValueError(f"method {method} does not use a graph")


def _estimate(method: str, ds: SynthDataset, config: RunConfig, lam: float, seed: int):
    if method == "local":
        return local_all(ds.specs, ds.data)
    if method == "global":
        return global_estimate(ds.specs, ds.data)
    graph = _method_graph(method, ds, config.selection.alpha)
    solver_cfg = _solver_config(config, lam, ds.config.samples_per_device, seed)
    model = _availability_model(config, ds.config.num_devices)
    if model is None:
        return run(graph, ds.specs, ds.data, solver_cfg).theta_bar
    return run_with_availability(graph, ds.specs, ds.data, solver_cfg, model).theta_bar


SOLVER_METHODS = ("oracle", "fed_admm", "fed_admm_es", "fed_admm_local_es")


def _lambda_table(config: RunConfig, cells: list[dict], log=None) -> dict[tuple[int, str], float]:
    """Penalty weight per (cell, method) under the configured policy."""
    table: dict[tuple[int, str], float] = {}
    for cell_idx, cell in enumerate(cells):
        if cell["lam"] is not None:
            for method in config.methods:
                table[(cell_idx, method)] = cell["lam"]
            continue
        if config.solver.lambda_policy == "fixed":
            for method in config.methods:
                table[(cell_idx, method)] = config.solver.lam
            continue
        ds = _cell_dataset(config, cell, _derived_seed(config.seed, cell_idx, 0))
        for method in config.methods:
            if method not in SOLVER_METHODS:
                continue
            graph = _method_graph(method, ds, config.selection.alpha)
            lam = cross_validate_lambda(
                graph, ds.specs, ds.data, seed=config.seed, solver_tol=1e-6
            )
            table[(cell_idx, method)] = lam
            if log is not None:
                log(f"cell {cell_idx}: cross-validated lambda[{method}] = {lam:.5g}")
        for method in config.methods:
            table.setdefault((cell_idx, method), config.solver.lam)
    return table


def _read_existing_rows(path: Path) -> dict[tuple, dict]:
    rows: dict[tuple, dict] = {}
    if not path.is_file():
        return rows
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows[(int(row["cell"]), int(row["rep"]), row["method"])] = row
    return rows


def _write_rows(path: Path, rows: list[dict], method_order: Sequence[str]) -> None:
    order = {m: k for k, m in enumerate(method_order)}
    rows = sorted(
        rows,
        key=lambda r: (int(r["cell"]), int(r["rep"]), order.get(r["method"], 99), r["method"]),
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(RESULT_COLUMNS))
        writer.writeheader()
        writer.writerows(rows)


def run_experiment(
    config: RunConfig,
    *,
    out_dir=None,
    threads: int = 1,
    log=None,
) -> list[dict]:
    """Run the sweep grid and write ``results.csv`` into the output directory.

    Re-running over an existing output directory skips (cell, replication)
    pairs whose rows are already present; the final file is rewritten in
    canonical row order either way.
    """
    if config.synth is None:
        return run_accuracy_experiment(config, out_dir=out_dir, log=log)
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    digest = config_hash(config)
    cells = _sweep_cells(config)
    lam_table = _lambda_table(config, cells, log=log)
    existing = _read_existing_rows(csv_path)

    tasks = []
    for cell_idx, cell in enumerate(cells):
        for rep in range(config.replications):
            done = all((cell_idx, rep, m) in existing for m in config.methods)
            if not done:
                tasks.append((cell_idx, cell, rep))

    def run_task(task):
        cell_idx, cell, rep = task
        data_seed = _derived_seed(config.seed, cell_idx, rep)
        solver_seed = _derived_seed(config.seed, cell_idx, rep, 1)
        ds = _cell_dataset(config, cell, data_seed)
        rows = []
        for method in config.methods:
            lam = lam_table.get((cell_idx, method), config.solver.lam)
            estimate = _estimate(method, ds, config, lam, solver_seed)
            rows.append(
                {
                    "method": method,
                    "num_devices": cell["num_devices"],
                    "n": cell["samples_per_device"],
                    "K": config.synth.clusters,
                    "p": config.synth.dim,
                    "rho_corrupt": f"{cell['corruption']:.6g}",
                    "rep": rep,
                    "error": f"{avg_sq_error(estimate, ds.theta_star):.12g}",
                    "seed": data_seed,
                    "cell": cell_idx,
                    "config_hash": digest,
                }
            )
        return rows

    new_rows: list[dict] = []
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for rows in pool.map(run_task, tasks):
                new_rows.extend(rows)
                if log is not None and rows:
                    log(f"cell {rows[0]['cell']} rep {rows[0]['rep']} done")
    else:
        for task in tasks:
            rows = run_task(task)
            new_rows.extend(rows)
            if log is not None and rows:
                log(f"cell {rows[0]['cell']} rep {rows[0]['rep']} done")

    merged = dict(existing)
    for row in new_rows:
        merged[(int(row["cell"]), int(row["rep"]), row["method"])] = {
            k: str(v) for k, v in row.items()
        }
    all_rows = list(merged.values())
    _write_rows(csv_path, all_rows, config.methods)
    return all_rows


def _split_device(data: DeviceData, rng: np.random.Generator, train_fraction: float):
    n_train = max(1, min(data.n - 1, int(round(train_fraction * data.n))))
    perm = rng.permutation(data.n)
    test_idx = perm[n_train:]
    return _drop_rows(data, test_idx)


def _classification_accuracy(theta: np.ndarray, holdout: Sequence[DeviceData]) -> float:
    correct = 0
    total = 0
    for u, dev in enumerate(holdout):
        predicted = (dev.covariates @ theta[u] > 0.0).astype(np.float64)
        correct += int(np.sum(predicted == dev.responses))
        total += dev.n
    return correct / total


def run_accuracy_experiment(config: RunConfig, *, out_dir=None, log=None) -> list[dict]:
    """Train/test protocol for an ingested classification dataset.

    Per repeat: a per-device random split, every requested method fit on
    the training part, and one pooled accuracy over all held-out samples.
    """
    if config.ingest is None:
        raise ConfigError("data_dir experiments require an ingest block")
    if config.ingest.family != "logistic":
        raise ConfigError("the accuracy protocol requires ingest.family = logistic")
    data, specs, excluded = ingest_dataset(
        config.data_dir,
        config.ingest.family,
        config.ingest.dim,
        config.ingest.sigma,
        config.ingest.min_samples,
    )
    if log is not None:
        for name, count in excluded:
            log(f"warning: excluded {name} ({count} samples below minimum)")
    graph_path = Path(config.data_dir) / "graph.txt"
    given_graph = read_graph_text(graph_path) if graph_path.is_file() else None

    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "accuracy.csv"
    digest = config_hash(config)

    rows: list[dict] = []
    num = len(data)
    for rep in range(config.ingest.repeats):
        train, holdout = [], []
        for u, dev in enumerate(data):
            rng = rng_mod.substream(config.seed, rng_mod.DOMAIN_EXPERIMENT, rep, u)
            kept, held = _split_device(dev, rng, config.ingest.train_fraction)
            train.append(kept)
            holdout.append(held)
        solver_seed = _derived_seed(config.seed, rep)
        for method in config.methods:
            if method == "local":
                theta = local_all(specs, train)
            elif method == "global":
                theta = global_estimate(specs, train)
            else:
                fits = fit_all(specs, train)
                if method == "fed_admm_local_es" or (method == "fed_admm" and given_graph is None):
                    graph = local_es_candidate_graph(fits, config.selection.alpha)
                elif method == "fed_admm":
                    graph = given_graph
                elif method == "fed_admm_es":
                    base = given_graph if given_graph is not None else local_es_candidate_graph(
                        fits, config.selection.alpha
                    )
                    graph = evaluate_edges(base, fits, config.selection.alpha).selected_graph()
                elif method == "oracle":
                    raise ConfigError("oracle is undefined for ingested data")
                min_n = min(d.n for d in train)
                solver_cfg = _solver_config(config, config.solver.lam, min_n, solver_seed)
                theta = run(graph, specs, train, solver_cfg).theta_bar
            accuracy = _classification_accuracy(theta, holdout)
            rows.append(
                {
                    "method": method,
                    "rep": rep,
                    "accuracy": f"{accuracy:.6f}",
                    "num_devices": num,
                    "seed": solver_seed,
                    "config_hash": digest,
                }
            )
        if log is not None:
            log(f"repeat {rep} done")

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["method", "rep", "accuracy", "num_devices", "seed", "config_hash"]
        )
        writer.writeheader()
        writer.writerows(rows)
    if log is not None:
        for method in config.methods:
            values = [float(r["accuracy"]) for r in rows if r["method"] == method]
            log(f"{method}: accuracy {np.mean(values):.3f} ({np.std(values):.3f})")
    return rows


BENCH_METHODS = ("fed_admm_full", "fed_admm_batch", "gd", "sgd")


def bench_learning_curves(
    config: RunConfig,
    *,
    out_dir=None,
    trace_points: int = 200,
    log=None,
) -> list[dict]:
    """Estimation-error learning curves at a matched iteration budget.

    Runs the solver with full batch and with the configured mini-batch,
    plus plain gradient descent and stochastic gradient descent on the
    same objective, recording the averaged iterate's distance to the true
    parameters; writes ``bench.csv``.
    """
    if config.synth is None:
        raise ConfigError("bench requires a synth block")
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = _cell_dataset(
        config,
        dict(
            num_devices=config.synth.num_devices,
            samples_per_device=config.synth.samples_per_device,
            corruption=config.synth.corruption,
            lam=None,
        ),
        _derived_seed(config.seed, 0, 0),
    )
    if config.solver.lambda_policy == "cv_first_rep":
        lam = cross_validate_lambda(ds.graph, ds.specs, ds.data, seed=config.seed, solver_tol=1e-6)
        if log is not None:
            log(f"cross-validated lambda = {lam:.5g}")
    else:
        lam = config.solver.lam
    iterations = config.solver.iterations
    every = max(1, iterations // trace_points)
    n = config.synth.samples_per_device
    rows: list[dict] = []

    def admm_curve(label: str, batch: int):
        def grab(t, theta_bar, _state):
            rows.append(
                {"method": label, "t": t, "err_sq": f"{avg_sq_error(theta_bar, ds.theta_star):.12g}"}
            )

        cfg = _solver_config(config, lam, n, _derived_seed(config.seed, 1))
        cfg = replace(cfg, batch_size=batch)
        run(ds.graph, ds.specs, ds.data, cfg, callback=grab, callback_every=every)

    def gradient_curve(label: str, batch: int | None):
        def grab(t, theta_bar, _theta):
            rows.append(
                {"method": label, "t": t, "err_sq": f"{avg_sq_error(theta_bar, ds.theta_star):.12g}"}
            )

        subgradient_solver(
            ds.graph,
            ds.specs,
            ds.data,
            lam,
            config.solver.norm,
            iterations=iterations,
            batch_size=batch,
            seed=_derived_seed(config.seed, 2),
            callback=grab,
            callback_every=every,
        )

    batch = min(config.solver.batch_size, n)
    admm_curve("fed_admm_full", n)
    admm_curve("fed_admm_batch", batch)
    gradient_curve("gd", None)
    gradient_curve("sgd", batch)

    csv_path = out / "bench.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "t", "err_sq"])
        writer.writeheader()
        writer.writerows(rows)
    if log is not None:
        log(f"wrote {csv_path}")
    return rows

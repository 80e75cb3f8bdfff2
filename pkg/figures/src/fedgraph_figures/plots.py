"""Render benchmark figures from fedgraph result CSVs.

Three figure families, all static image files:

* error versus device count, one panel per (samples-per-device, corruption)
  pair, from the sweep ``results.csv`` schema;
* error versus corruption level, one panel per (samples-per-device,
  device-count) pair, from the same schema;
* estimation-error learning curves from the ``bench.csv`` trace schema
  (``method,t,err_sq``).

The scripts only aggregate per-group means and standard deviations; they
never recompute statistics beyond that.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

log = logging.getLogger("fedgraph_figures")

__all__ = [
    "read_rows",
    "plot_error_vs_num_devices",
    "plot_error_vs_corruption",
    "plot_learning_curves",
]

METHOD_LABELS = {
    "oracle": "Oracle",
    "fed_admm": "Fed-ADMM",
    "fed_admm_es": "Fed-ADMM-ES",
    "fed_admm_local_es": "Fed-ADMM-Local-ES",
    "local": "Local",
    "global": "Global",
    "fed_admm_full": "Fed-ADMM (full batch)",
    "fed_admm_batch": "Fed-ADMM (mini batch)",
    "gd": "GD",
    "sgd": "SGD",
}

METHOD_ORDER = list(METHOD_LABELS)

_MARKERS = ["o", "s", "^", "v", "D", "x", "*", "P"]


def read_rows(csv_path) -> list[dict]:
    path = Path(csv_path)
    if not path.is_file():
        raise FileNotFoundError(f"no such results file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def _methods_present(rows: list[dict], requested=None) -> list[str]:
    present = {row["method"] for row in rows}
    if requested is None:
        ordered = [m for m in METHOD_ORDER if m in present]
        extras = sorted(present - set(ordered))
        return ordered + extras
    kept = []
    for method in requested:
        if method in present:
            kept.append(method)
        else:
            log.warning("method %r has no rows; skipping its line", method)
    return kept


def _mean_sd_by(rows, x_key: str, value_key: str):
    """x -> (mean, sd) of the value column, x sorted numerically."""
    groups: dict[float, list[float]] = {}
    for row in rows:
        groups.setdefault(float(row[x_key]), []).append(float(row[value_key]))
    xs = sorted(groups)
    means = np.array([np.mean(groups[x]) for x in xs])
    sds = np.array([np.std(groups[x]) for x in xs])
    return np.array(xs), means, sds


def _panel_values(rows, key: str) -> list[float]:
    return sorted({float(row[key]) for row in rows})


def _style(method: str) -> dict:
    idx = METHOD_ORDER.index(method) if method in METHOD_ORDER else len(_MARKERS) - 1
    return dict(marker=_MARKERS[idx % len(_MARKERS)], markersize=4, linewidth=1.4)


def build_error_vs_num_devices(rows: list[dict], methods=None):
    """Figure with panels keyed by (samples per device, corruption level)."""
    if not rows:
        raise ValueError("results table is empty")
    methods = _methods_present(rows, methods)
    corruption_levels = _panel_values(rows, "rho_corrupt")
    sample_sizes = _panel_values(rows, "n")
    nrows, ncols = len(corruption_levels), len(sample_sizes)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.4 * ncols, 2.8 * nrows), squeeze=False, sharex=True
    )
    for i, rho_c in enumerate(corruption_levels):
        for j, n in enumerate(sample_sizes):
            ax = axes[i][j]
            panel = [
                r
                for r in rows
                if float(r["rho_corrupt"]) == rho_c and float(r["n"]) == n
            ]
            for method in methods:
                subset = [r for r in panel if r["method"] == method]
                if not subset:
                    continue
                xs, means, sds = _mean_sd_by(subset, "num_devices", "error")
                ax.errorbar(
                    xs, means, yerr=sds, label=METHOD_LABELS.get(method, method),
                    capsize=2, **_style(method),
                )
            ax.set_title(f"n = {n:g}, corruption = {rho_c:g}", fontsize=9)
            if i == nrows - 1:
                ax.set_xlabel("number of devices")
            if j == 0:
                ax.set_ylabel("average squared error")
            ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    return fig


def plot_error_vs_num_devices(results_csv, out_image, methods=None) -> Path:
    fig = build_error_vs_num_devices(read_rows(results_csv), methods)
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def build_error_vs_corruption(rows: list[dict], methods=None, annotate_crossover=True):
    """Figure with panels keyed by (samples per device, device count)."""
    if not rows:
        raise ValueError("results table is empty")
    methods = _methods_present(rows, methods)
    sample_sizes = _panel_values(rows, "n")
    device_counts = _panel_values(rows, "num_devices")
    nrows, ncols = len(sample_sizes), len(device_counts)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.4 * ncols, 2.8 * nrows), squeeze=False, sharex=True
    )
    for i, n in enumerate(sample_sizes):
        for j, num in enumerate(device_counts):
            ax = axes[i][j]
            panel = [
                r
                for r in rows
                if float(r["n"]) == n and float(r["num_devices"]) == num
            ]
            curves = {}
            for method in methods:
                subset = [r for r in panel if r["method"] == method]
                if not subset:
                    continue
                xs, means, sds = _mean_sd_by(subset, "rho_corrupt", "error")
                curves[method] = (xs, means)
                ax.errorbar(
                    xs, means, yerr=sds, label=METHOD_LABELS.get(method, method),
                    capsize=2, **_style(method),
                )
            if annotate_crossover and "fed_admm" in curves and "local" in curves:
                xs, fed = curves["fed_admm"]
                xs_local, local = curves["local"]
                shared = [x for x in xs if x in set(xs_local)]
                for x in shared:
                    fed_val = fed[list(xs).index(x)]
                    local_val = local[list(xs_local).index(x)]
                    if fed_val > local_val:
                        ax.axvline(x, color="gray", linestyle=":", linewidth=1)
                        ax.annotate(
                            "exceeds local fits",
                            xy=(x, fed_val),
                            fontsize=7,
                            textcoords="offset points",
                            xytext=(4, 4),
                        )
                        break
            ax.set_title(f"n = {n:g}, devices = {num:g}", fontsize=9)
            if i == nrows - 1:
                ax.set_xlabel("corruption level")
            if j == 0:
                ax.set_ylabel("average squared error")
            ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    return fig


def plot_error_vs_corruption(results_csv, out_image, methods=None) -> Path:
    fig = build_error_vs_corruption(read_rows(results_csv), methods)
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def build_learning_curves(rows: list[dict], methods=None, log_y: bool = True):
    """Single panel of estimation error against iteration count."""
    if not rows:
        raise ValueError("trace table is empty")
    methods = _methods_present(rows, methods)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for method in methods:
        subset = [r for r in rows if r["method"] == method]
        if not subset:
            continue
        xs, means, _sds = _mean_sd_by(subset, "t", "err_sq")
        ax.plot(xs, means, label=METHOD_LABELS.get(method, method), **_style(method))
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("average squared error")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_learning_curves(trace_csv, out_image, methods=None, log_y: bool = True) -> Path:
    fig = build_learning_curves(read_rows(trace_csv), methods, log_y)
    out = Path(out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out

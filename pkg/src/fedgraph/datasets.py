"""Dataset directory format: per-device CSVs plus graph and truth files.

A dataset directory holds ``device_<u>.csv`` per device (header
``y,x1,...,xp`` for regression families, ``z1,...,zp`` for the mean
family), ``graph.txt`` and optionally ``graph0.txt`` in the graph text
format, and ``theta_star.csv`` when the truth is known.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .graph import write_graph_text
from .models import DeviceData, ModelSpec, validate_device_data
from .synth import SynthDataset

__all__ = [
    "ConfigError",
    "write_device_csv",
    "read_device_csv",
    "write_theta_csv",
    "read_theta_csv",
    "materialize_dataset",
    "ingest_dataset",
]


class ConfigError(ValueError):
    """Invalid configuration or dataset layout."""


def _expected_header(family: str, dim: int) -> list[str]:
    if family == "mean":
        return [f"z{k}" for k in range(1, dim + 1)]
    return ["y"] + [f"x{k}" for k in range(1, dim + 1)]


def write_device_csv(path, spec: ModelSpec, data: DeviceData) -> None:
    validate_device_data(spec, data)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(spec.family, spec.dim))
        if spec.family == "mean":
            for row in data.points:
                writer.writerow([f"{v:.17g}" for v in row])
        else:
            for y, x in zip(data.responses, data.covariates):
                writer.writerow([f"{y:.17g}"] + [f"{v:.17g}" for v in x])


def read_device_csv(path, spec: ModelSpec) -> DeviceData:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty device file") from None
        expected = _expected_header(spec.family, spec.dim)
        if [h.strip() for h in header] != expected:
            raise ConfigError(
                f"{path}: header {header} does not match expected {expected}"
            )
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ConfigError(f"{path}: device holds no samples")
    table = np.array(rows, dtype=np.float64)
    if spec.family == "mean":
        data = DeviceData.from_points(table)
    else:
        data = DeviceData.from_xy(table[:, 1:], table[:, 0])
    try:
        validate_device_data(spec, data)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return data


def write_theta_csv(path, theta: np.ndarray, cluster_labels=None) -> None:
    theta = np.asarray(theta, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["device", "cluster"] + [f"theta_{k}" for k in range(1, theta.shape[1] + 1)]
        writer.writerow(header)
        for u, row in enumerate(theta, start=1):
            label = cluster_labels[u - 1] if cluster_labels is not None else 0
            writer.writerow([u, label] + [f"{v:.17g}" for v in row])


def read_theta_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = sorted((int(r[0]), [float(v) for v in r[2:]]) for r in reader if r)
    return np.array([row for _, row in rows], dtype=np.float64)


def materialize_dataset(dataset: SynthDataset, out_dir) -> Path:
    """Write a generated dataset to disk in the directory format."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_graph_text(dataset.graph, out / "graph.txt")
    write_graph_text(dataset.graph0, out / "graph0.txt")
    write_theta_csv(out / "theta_star.csv", dataset.theta_star, dataset.clustering.labels)
    for u, (spec, data) in enumerate(zip(dataset.specs, dataset.data), start=1):
        write_device_csv(out / f"device_{u}.csv", spec, data)
    return out


_DEVICE_FILE = re.compile(r"device_(\d+)\.csv$")


def ingest_dataset(
    directory,
    family: str,
    dim: int,
    sigma: float = 1.0,
    min_samples: int = 1,
) -> tuple[list[DeviceData], list[ModelSpec], list[tuple[str, int]]]:
    """Load and validate a dataset directory.

    Devices with fewer than ``min_samples`` rows are excluded and reported
    in the returned exclusion list as (filename, sample count) pairs.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"dataset directory not found: {directory}")
    spec = ModelSpec(family, dim, sigma)
    files = []
    for path in directory.iterdir():
        match = _DEVICE_FILE.search(path.name)
        if match:
            files.append((int(match.group(1)), path))
    if not files:
        raise ConfigError(f"no device_<u>.csv files in {directory}")
    files.sort()
    data: list[DeviceData] = []
    excluded: list[tuple[str, int]] = []
    for _, path in files:
        device = read_device_csv(path, spec)
        if device.n < min_samples:
            excluded.append((path.name, device.n))
            continue
        data.append(device)
    if not data:
        raise ConfigError(f"all devices excluded by min_samples={min_samples}")
    return data, [spec] * len(data), excluded

"""Synthetic data generation: clusters, cluster parameters, device samples.

The pipeline mirrors the benchmark protocol: devices are evenly partitioned
into clusters, each cluster draws one true parameter vector from
N(0, p^{-1/2} I), every device samples from its cluster's distribution, and
a surrogate graph is produced by randomly flipping pair membership in the
characteristic graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .graph import Clustering, DeviceGraph, characteristic_graph, corrupt_graph
from .models import DeviceData, ModelSpec

__all__ = [
    "SynthConfig",
    "SynthDataset",
    "gen_clusters",
    "gen_parameters",
    "gen_device_data",
    "build_dataset",
]


@dataclass(frozen=True)
class SynthConfig:
    num_devices: int
    clusters: int
    dim: int
    samples_per_device: int
    family: str = "linear"
    sigma: float = 1.0
    corruption: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_devices < 1:
            raise ValueError("num_devices must be >= 1")
        if not 1 <= self.clusters <= self.num_devices:
            raise ValueError(
                f"clusters must lie in 1..{self.num_devices}, got {self.clusters}"
            )
        if self.samples_per_device < 1:
            raise ValueError("samples_per_device must be >= 1")
        if not 0.0 <= self.corruption <= 1.0:
            raise ValueError(f"corruption must lie in [0, 1], got {self.corruption}")
        ModelSpec(self.family, self.dim, self.sigma)  # reuse family/dim/sigma checks


@dataclass(frozen=True)
class SynthDataset:
    """Everything one run needs: truth, data, and both graphs."""

    config: SynthConfig
    clustering: Clustering
    theta_star: np.ndarray  # (num_devices, dim)
    specs: list[ModelSpec]
    data: list[DeviceData]
    graph0: DeviceGraph  # characteristic graph
    graph: DeviceGraph  # corrupted surrogate
    cluster_params: np.ndarray = field(repr=False, default=None)


def gen_clusters(num_devices: int, num_clusters: int) -> Clustering:
    """Contiguous blocks of near-equal size; remainders go to the lowest labels."""
    if not 1 <= num_clusters <= num_devices:
        raise ValueError(f"num_clusters must lie in 1..{num_devices}, got {num_clusters}")
    base, remainder = divmod(num_devices, num_clusters)
    labels: list[int] = []
    for label in range(1, num_clusters + 1):
        size = base + (1 if label <= remainder else 0)
        labels.extend([label] * size)
    return Clustering(labels=tuple(labels), num_clusters=num_clusters)


def gen_parameters(num_clusters: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """One parameter vector per cluster, i.i.d. N(0, dim^{-1/2} I)."""
    scale = dim ** (-0.25)  # per-coordinate variance dim^{-1/2}
    return rng.normal(0.0, scale, size=(num_clusters, dim))


def gen_device_data(
    family: str,
    theta_star: np.ndarray,
    n: int,
    rng: np.random.Generator,
    sigma: float = 1.0,
) -> DeviceData:
    """Draw one device's samples given its true parameter."""
    theta_star = np.asarray(theta_star, dtype=np.float64)
    p = theta_star.shape[0]
    if family == "mean":
        noise = rng.normal(0.0, 1.0, size=(n, p)) * sigma
        return DeviceData.from_points(theta_star + noise)
    x = rng.normal(0.0, 1.0, size=(n, p))
    margins = x @ theta_star
    if family == "linear":
        y = margins + rng.normal(0.0, 1.0, size=n)
        return DeviceData.from_xy(x, y)
    if family == "logistic":
        probs = 1.0 / (1.0 + np.exp(-margins))
        y = (rng.random(n) < probs).astype(np.float64)
        return DeviceData.from_xy(x, y)
    raise ValueError(f"unknown family {family!r}")


def build_dataset(config: SynthConfig) -> SynthDataset:
    """Run the full generation pipeline with keyed per-device streams."""
    clustering = gen_clusters(config.num_devices, config.clusters)
    params_rng = rng_mod.substream(config.seed, rng_mod.DOMAIN_PARAMS)
    cluster_params = gen_parameters(config.clusters, config.dim, params_rng)
    theta_star = np.stack([cluster_params[label - 1] for label in clustering.labels])

    spec = ModelSpec(config.family, config.dim, config.sigma)
    data = []
    for device in range(config.num_devices):
        device_rng = rng_mod.substream(config.seed, rng_mod.DOMAIN_DEVICE, device)
        data.append(
            gen_device_data(
                config.family,
                theta_star[device],
                config.samples_per_device,
                device_rng,
                config.sigma,
            )
        )

    graph0 = characteristic_graph(clustering)
    graph_rng = rng_mod.substream(config.seed, rng_mod.DOMAIN_GRAPH)
    graph = corrupt_graph(graph0, config.corruption, graph_rng)
    return SynthDataset(
        config=config,
        clustering=clustering,
        theta_star=theta_star,
        specs=[spec] * config.num_devices,
        data=data,
        graph0=graph0,
        graph=graph,
        cluster_params=cluster_params,
    )

"""Comparison estimators and the evaluation metric.

Five estimators: per-device local fits, one pooled global fit, the solver on
the true characteristic graph (oracle), the solver on the given surrogate
graph, and the solver on the surrogate graph after edge selection. A plain
(sub)gradient solver of the same objective is provided for iteration-budget
comparisons.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import rng as rng_mod
from .admm import SolverConfig, run
from .graph import DeviceGraph
from .linalg import NumericError, solve_psd
from .models import (
    DeviceData,
    LocalFit,
    ModelSpec,
    batch_gradient,
    empirical_hessian,
    local_estimate,
    risk_gradient,
)
from .edge_selection import evaluate_edges, local_es_candidate_graph
from .penalty import check_norm

__all__ = [
    "fit_all",
    "local_all",
    "global_estimate",
    "oracle_estimate",
    "fed_admm_estimate",
    "fed_admm_es_estimate",
    "fed_admm_local_es_estimate",
    "subgradient_solver",
    "avg_sq_error",
]


def _specs_list(specs, num_devices: int) -> list[ModelSpec]:
    if isinstance(specs, ModelSpec):
        return [specs] * num_devices
    specs = list(specs)
    if len(specs) != num_devices:
        raise ValueError(f"expected {num_devices} model specs, got {len(specs)}")
    return specs


def fit_all(specs, data: Sequence[DeviceData]) -> list[LocalFit]:
    spec_list = _specs_list(specs, len(data))
    return [local_estimate(s, d) for s, d in zip(spec_list, data)]


def local_all(specs, data: Sequence[DeviceData]) -> np.ndarray:
    """Stack of per-device unpenalized estimates; needs no graph."""
    return np.stack([fit.theta_hat for fit in fit_all(specs, data)])


def global_estimate(specs, data: Sequence[DeviceData]) -> np.ndarray:
    """Single pooled fit replicated to every device row.

    Minimizes the total loss over all samples of all devices under one
    shared parameter: closed form for mean and linear, Newton for logistic.
    """
    spec_list = _specs_list(specs, len(data))
    families = {s.family for s in spec_list}
    if len(families) != 1:
        raise ValueError("pooled estimation requires a single family across devices")
    family = families.pop()
    dim = spec_list[0].dim
    num = len(data)

    if family == "mean":
        total = np.zeros(dim)
        count = 0
        for dev in data:
            total += dev.points.sum(axis=0)
            count += dev.n
        theta = total / count
        return np.tile(theta, (num, 1))

    if family == "linear":
        gram = np.zeros((dim, dim))
        rhs = np.zeros(dim)
        for dev in data:
            gram += dev.covariates.T @ dev.covariates
            rhs += dev.covariates.T @ dev.responses
        try:
            theta = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular pooled normal equations") from exc
        return np.tile(theta, (num, 1))

    theta = np.zeros(dim)
    counts = np.array([dev.n for dev in data], dtype=np.float64)
    for _ in range(100):
        grad = np.zeros(dim)
        hess = np.zeros((dim, dim))
        for spec, dev in zip(spec_list, data):
            grad += dev.n * risk_gradient(spec, dev, theta)
            hess += dev.n * empirical_hessian(spec, dev, theta)
        grad /= counts.sum()
        hess /= counts.sum()
        if float(np.linalg.norm(grad)) <= 1e-9:
            break
        theta = theta - solve_psd(hess, grad)
    return np.tile(theta, (num, 1))


def oracle_estimate(
    specs, data: Sequence[DeviceData], g0: DeviceGraph, config: SolverConfig
) -> np.ndarray:
    """Solver output on the true characteristic graph."""
    return run(g0, specs, data, config).theta_bar


def fed_admm_estimate(
    g: DeviceGraph, specs, data: Sequence[DeviceData], config: SolverConfig
) -> np.ndarray:
    """Solver output on the given surrogate graph."""
    return run(g, specs, data, config).theta_bar


def fed_admm_es_estimate(
    g: DeviceGraph,
    specs,
    data: Sequence[DeviceData],
    config: SolverConfig,
    alpha: float = 0.05,
    fits: Sequence[LocalFit] | None = None,
) -> np.ndarray:
    """Edge selection on the surrogate graph, then the solver on the kept edges."""
    if fits is None:
        fits = fit_all(specs, data)
    selected = evaluate_edges(g, fits, alpha).selected_graph()
    return run(selected, specs, data, config).theta_bar


def fed_admm_local_es_estimate(
    g_unused: DeviceGraph | None,
    specs,
    data: Sequence[DeviceData],
    config: SolverConfig,
    alpha: float = 0.05,
    fits: Sequence[LocalFit] | None = None,
) -> np.ndarray:
    """Edge selection over all device pairs from local fits only, then the solver."""
    if fits is None:
        fits = fit_all(specs, data)
    candidate = local_es_candidate_graph(fits, alpha)
    return run(candidate, specs, data, config).theta_bar


def _penalty_subgradient(
    g: DeviceGraph, theta: np.ndarray, norm: str, eplus: np.ndarray, eminus: np.ndarray
) -> np.ndarray:
    """Subgradient of the fused penalty routed through the incidence structure.

    Uses the zero subgradient at zero differences for both norms.
    """
    out = np.zeros_like(theta)
    if g.num_edges == 0:
        return out
    diffs = theta[eplus] - theta[eminus]
    if norm == "l1":
        rows = np.sign(diffs)
    else:
        mags = np.linalg.norm(diffs, axis=1, keepdims=True)
        rows = np.zeros_like(diffs)
        nonzero = mags[:, 0] > 0.0
        rows[nonzero] = diffs[nonzero] / mags[nonzero]
    np.add.at(out, eplus, rows)
    np.subtract.at(out, eminus, rows)
    return out


def subgradient_solver(
    g: DeviceGraph,
    specs,
    data: Sequence[DeviceData],
    lam: float,
    norm: str = "l1",
    *,
    iterations: int,
    schedule: str = "inv_sqrt",
    batch_size: int | None = None,
    step_c: float = 0.5,
    seed: int = 0,
    average: bool = False,
    callback=None,
    callback_every: int = 1,
) -> np.ndarray:
    """Plain (sub)gradient descent on the penalized objective.

    Full batch when ``batch_size`` is None; step size ``step_c / sqrt(t)``
    under the default schedule, or a constant ``step_c`` with
    ``schedule="constant"``. Uses the same per-device gradient scale as the
    ADMM engine, so ``lam`` follows the same averaged-objective convention.
    With ``average=True`` returns the running average of the iterates
    instead of the final one.
    """
    check_norm(norm)
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    if schedule not in ("inv_sqrt", "constant"):
        raise ValueError(f"unknown schedule {schedule!r}")
    spec_list = _specs_list(specs, g.num_nodes)
    num_nodes = g.num_nodes
    dim = spec_list[0].dim
    eplus = np.array([e[0] - 1 for e in g.edges], dtype=np.int64)
    eminus = np.array([e[1] - 1 for e in g.edges], dtype=np.int64)
    lam_edge = lam * num_nodes
    rngs = [rng_mod.substream(seed, rng_mod.DOMAIN_BATCH, u) for u in range(num_nodes)]

    theta = np.zeros((num_nodes, dim))
    theta_sum = np.zeros_like(theta)
    for t in range(iterations):
        theta_sum += theta
        step = step_c if schedule == "constant" else step_c / np.sqrt(t + 1.0)
        grad = np.zeros_like(theta)
        for u in range(num_nodes):
            if batch_size is None or batch_size >= data[u].n:
                idx = None
            else:
                idx = rngs[u].choice(data[u].n, size=batch_size, replace=False)
            grad[u] = batch_gradient(spec_list[u], data[u], idx, theta[u])
        grad += lam_edge * _penalty_subgradient(g, theta, norm, eplus, eminus)
        theta = theta - step * grad
        if callback is not None and ((t + 1) % max(callback_every, 1) == 0 or t + 1 == iterations):
            callback(t + 1, theta_sum / (t + 1), theta)
    if average:
        return theta_sum / iterations
    return theta


def avg_sq_error(theta_hat: np.ndarray, theta_star: np.ndarray) -> float:
    """Squared Frobenius distance divided by the number of devices."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if theta_hat.shape != theta_star.shape:
        raise ValueError(f"shape mismatch: {theta_hat.shape} vs {theta_star.shape}")
    diff = theta_hat - theta_star
    return float(np.sum(diff * diff)) / theta_hat.shape[0]

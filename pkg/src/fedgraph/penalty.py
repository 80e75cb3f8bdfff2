"""Edge norms, the fused penalty, the penalized objective, and prox operators.

The objective evaluated here is

    F(Theta) = (1/|V|) sum_u avg-loss_u(theta_u) + lam * sum_e phi(theta_{e+} - theta_{e-})

with phi either the l1 or l2 norm on edge differences. The edge prox solves
the joint two-block minimization used by the ADMM edge step in closed form:
with midpoint m = (a + b) / 2 and s = prox_{(2 lam / rho) phi}(a - b), the
minimizer is (m + s/2, m - s/2).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import DeviceGraph
from .models import DeviceData, ModelSpec, empirical_risk

__all__ = [
    "NORMS",
    "check_norm",
    "phi",
    "fused_penalty",
    "objective",
    "prox_phi",
    "prox_phi_rows",
    "edge_prox",
]

NORMS = ("l1", "l2")


def check_norm(norm: str) -> str:
    if norm not in NORMS:
        raise ValueError(f"unknown edge norm {norm!r}, expected one of {NORMS}")
    return norm


def phi(norm: str, v: np.ndarray) -> float:
    check_norm(norm)
    v = np.asarray(v, dtype=np.float64)
    if norm == "l1":
        return float(np.sum(np.abs(v)))
    return float(np.linalg.norm(v))


def fused_penalty(g: DeviceGraph, theta: np.ndarray, norm: str = "l1") -> float:
    """Sum of phi(theta_{e+} - theta_{e-}) over the graph's edges."""
    check_norm(norm)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[0] != g.num_nodes:
        raise ValueError(f"theta must have {g.num_nodes} rows, got shape {theta.shape}")
    if g.num_edges == 0:
        return 0.0
    plus = np.array([e[0] - 1 for e in g.edges])
    minus = np.array([e[1] - 1 for e in g.edges])
    diffs = theta[plus] - theta[minus]
    if norm == "l1":
        return float(np.sum(np.abs(diffs)))
    return float(np.sum(np.linalg.norm(diffs, axis=1)))


def _specs_list(specs, num_devices: int) -> list[ModelSpec]:
    if isinstance(specs, ModelSpec):
        return [specs] * num_devices
    specs = list(specs)
    if len(specs) != num_devices:
        raise ValueError(f"expected {num_devices} model specs, got {len(specs)}")
    return specs


def objective(
    g: DeviceGraph,
    specs: ModelSpec | Sequence[ModelSpec],
    data: Sequence[DeviceData],
    theta: np.ndarray,
    lam: float,
    norm: str = "l1",
) -> float:
    """Penalized objective: mean per-device risk plus lam times the fused penalty."""
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    theta = np.asarray(theta, dtype=np.float64)
    spec_list = _specs_list(specs, g.num_nodes)
    if len(data) != g.num_nodes:
        raise ValueError(f"expected {g.num_nodes} device datasets, got {len(data)}")
    risks = [empirical_risk(s, d, theta[u]) for u, (s, d) in enumerate(zip(spec_list, data))]
    return float(np.mean(risks)) + lam * fused_penalty(g, theta, norm)


def prox_phi(norm: str, v: np.ndarray, tau: float) -> np.ndarray:
    """argmin_s { tau * phi(s) + 0.5 ||s - v||^2 }.

    Soft threshold for l1; block shrinkage for l2 (zero at or below the
    threshold).
    """
    check_norm(norm)
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    if norm == "l1":
        return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
    magnitude = float(np.linalg.norm(v))
    if magnitude == 0.0:
        return np.zeros_like(v)
    return max(1.0 - tau / magnitude, 0.0) * v


def prox_phi_rows(norm: str, v: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise prox of an (m, p) matrix; vectorized form used by the solver."""
    check_norm(norm)
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    if norm == "l1":
        return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
    magnitudes = np.linalg.norm(v, axis=1, keepdims=True)
    scale = np.zeros_like(magnitudes)
    nonzero = magnitudes > 0.0
    scale[nonzero] = np.maximum(1.0 - tau / magnitudes[nonzero], 0.0)
    return scale * v


def edge_prox(
    a: np.ndarray, b: np.ndarray, lam: float, rho: float, norm: str = "l1"
) -> tuple[np.ndarray, np.ndarray]:
    """Exact joint minimizer of the ADMM edge subproblem.

    Minimizes lam * phi(beta_ij - beta_ji)
    + (rho/2) (||a - beta_ij||^2 + ||b - beta_ji||^2) over the pair.
    """
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    midpoint = 0.5 * (a + b)
    s = prox_phi(norm, a - b, 2.0 * lam / rho)
    return midpoint + 0.5 * s, midpoint - 0.5 * s

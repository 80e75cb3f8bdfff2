"""Edge selection by simultaneous testing of parameter equality across edges.

Each candidate edge gets a Wald-type statistic built from the two endpoint
local fits; edges whose statistic stays below the chi-square threshold at
the Bonferroni-corrected level alpha / (number tested) are kept.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chi2 import chi2_quantile
from .graph import DeviceGraph, build_graph
from .linalg import cholesky_with_jitter
from .models import LocalFit

__all__ = [
    "EdgeTestReport",
    "chi2_quantile",
    "test_statistic",
    "select_edges",
    "evaluate_edges",
    "signal_distance",
    "min_signal_satisfied",
    "local_es_candidate_graph",
    "write_report_csv",
]


@dataclass(frozen=True)
class EdgeTestReport:
    """Per-edge statistics and decisions at one Bonferroni-corrected level."""

    edges: tuple[tuple[int, int], ...]
    stats: np.ndarray
    threshold: float
    keep: np.ndarray
    alpha: float
    num_tested: int
    num_nodes: int

    def selected_graph(self) -> DeviceGraph:
        pairs = [e for e, kept in zip(self.edges, self.keep) if kept]
        return build_graph(self.num_nodes, pairs)


def test_statistic(fit_plus: LocalFit, fit_minus: LocalFit) -> float:
    """Squared Wald statistic for equality of the two endpoint parameters.

    Solves the pooled-covariance metric by Cholesky rather than forming an
    inverse.
    """
    diff = fit_plus.theta_hat - fit_minus.theta_hat
    metric = fit_plus.omega_hat + fit_minus.omega_hat
    chol = cholesky_with_jitter(metric)
    half = np.linalg.solve(chol, diff)
    return float(half @ half)


def _stats_for_edges(
    edges: Sequence[tuple[int, int]], fits: Sequence[LocalFit]
) -> np.ndarray:
    return np.array(
        [test_statistic(fits[plus - 1], fits[minus - 1]) for plus, minus in edges]
    )


def select_edges(
    g: DeviceGraph,
    stats: np.ndarray,
    dim: int,
    alpha: float,
    num_tested: int | None = None,
) -> EdgeTestReport:
    """Keep the edges whose statistic is at or below the corrected threshold.

    ``num_tested`` defaults to the candidate edge count and sets the
    Bonferroni denominator; ties at exact equality are kept.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    stats = np.asarray(stats, dtype=np.float64)
    if stats.shape != (g.num_edges,):
        raise ValueError(f"expected {g.num_edges} statistics, got shape {stats.shape}")
    if num_tested is None:
        num_tested = g.num_edges
    if g.num_edges == 0:
        threshold = float("inf")
        keep = np.zeros(0, dtype=bool)
    else:
        threshold = chi2_quantile(dim, alpha / num_tested)
        keep = stats <= threshold
    return EdgeTestReport(
        edges=g.edges,
        stats=stats,
        threshold=threshold,
        keep=keep,
        alpha=alpha,
        num_tested=num_tested,
        num_nodes=g.num_nodes,
    )


def evaluate_edges(
    g: DeviceGraph,
    fits: Sequence[LocalFit],
    alpha: float,
    num_tested: int | None = None,
) -> EdgeTestReport:
    """Compute statistics for every edge of ``g`` and apply the selection rule."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if len(fits) != g.num_nodes:
        raise ValueError(f"expected {g.num_nodes} local fits, got {len(fits)}")
    stats = _stats_for_edges(g.edges, fits)
    dim = fits[0].theta_hat.shape[0]
    return select_edges(g, stats, dim, alpha, num_tested)


def signal_distance(
    theta_1: np.ndarray,
    theta_2: np.ndarray,
    omega_plus: np.ndarray,
    omega_minus: np.ndarray,
    c_plus: float,
    c_minus: float,
) -> float:
    """Adaptive distance between two parameters under the weighted metric."""
    for c in (c_plus, c_minus):
        if not 0.0 < c <= 1.0:
            raise ValueError(f"weights must lie in (0, 1], got {c}")
    diff = np.asarray(theta_1, dtype=np.float64) - np.asarray(theta_2, dtype=np.float64)
    metric = c_plus * omega_plus + c_minus * omega_minus
    chol = cholesky_with_jitter(metric)
    half = np.linalg.solve(chol, diff)
    return float(np.sqrt(half @ half))


def min_signal_satisfied(
    dist: float, n_e: int, dim: int, alpha: float, num_edges: int
) -> bool:
    """Whether n_e * dist^2 reaches four times the corrected threshold."""
    return n_e * dist**2 >= 4.0 * chi2_quantile(dim, alpha / num_edges)


def local_es_candidate_graph(fits: Sequence[LocalFit], alpha: float) -> DeviceGraph:
    """Select from all device pairs using only the local fits.

    The Bonferroni denominator is the full pair count |V|(|V|-1)/2.
    """
    num = len(fits)
    if num < 2:
        raise ValueError(f"need at least two devices, got {num}")
    all_pairs = build_graph(num, [(i, j) for j in range(1, num + 1) for i in range(1, j)])
    report = evaluate_edges(all_pairs, fits, alpha)
    return report.selected_graph()


def write_report_csv(report: EdgeTestReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["e_plus", "e_minus", "stat", "threshold", "keep"])
        for (plus, minus), stat, kept in zip(report.edges, report.stats, report.keep):
            writer.writerow([plus, minus, f"{stat:.12g}", f"{report.threshold:.12g}", int(kept)])

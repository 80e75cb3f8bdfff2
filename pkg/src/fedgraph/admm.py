"""Decentralized stochastic ADMM engine and its deterministic reference solver.

One superstep is: every device takes a node step (stochastic gradient on its
own data plus a consensus pull toward its edge slots), barrier, then every
edge updates its pair of auxiliary vectors by an exact prox and performs the
multiplier ascent, barrier. The output is the running average of the node
iterates, which converges to the minimizer of the penalized objective.

Scaling convention: ``SolverConfig.lam`` is the penalty weight of the
per-device-averaged objective evaluated by :func:`fedgraph.penalty.objective`.
Node steps use the raw per-device gradient (no 1/|V| factor), so the edge
subproblem internally uses the equivalent weight ``lam * |V|``; both the
stochastic engine and the reference solver therefore minimize the same
objective at the same ``lam``.

Within a superstep, node steps touch only their own row and their own edge
slots, and edge steps touch only their own slots, so both phases are
embarrassingly parallel; results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from . import rng as rng_mod
from .graph import DeviceGraph
from .linalg import NumericError, cholesky_with_jitter, solve_psd
from .models import (
    DeviceData,
    ModelSpec,
    batch_gradient,
    empirical_hessian,
    risk_gradient,
)
from .penalty import check_norm, edge_prox, prox_phi_rows

if TYPE_CHECKING:  # pragma: no cover
    from .availability import AvailabilityModel

__all__ = [
    "SolverConfig",
    "SolverState",
    "SolveResult",
    "ReferenceResult",
    "node_step",
    "proximal_node_step",
    "edge_step",
    "run",
    "reference_minimizer",
    "message_audit",
]

VARIANTS = ("sgd_step", "proximal_step")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the stochastic solver.

    ``lam`` follows the averaged-objective convention (see module docstring);
    ``batch_size=None`` resolves to min(10, smallest device sample count);
    the learning rate is ``kappa / t`` with t starting at 1.
    """

    iterations: int
    lam: float = 0.0
    rho: float = 1.0
    kappa: float = 1.0
    batch_size: int | None = None
    norm: str = "l1"
    seed: int = 0
    projection_radius: float = math.inf
    variant: str = "sgd_step"

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lam < 0.0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.rho <= 0.0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        check_norm(self.norm)
        if not self.projection_radius > 0.0:
            raise ValueError("projection_radius must be positive (inf disables)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class SolverState:
    """Mutable iterate state: parameters, edge slots, multipliers, averages.

    ``beta`` and ``alpha`` have shape (|E|, 2, p); slot 0 belongs to the
    larger endpoint of the edge, slot 1 to the smaller one. ``edges`` copies
    the graph's canonical edge order so per-node and per-edge operations can
    locate their slots.
    """

    theta: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    t: int
    theta_sum: np.ndarray
    edges: tuple[tuple[int, int], ...]
    message_log: list[tuple[int, int, str, int]] | None = None

    @property
    def num_nodes(self) -> int:
        return self.theta.shape[0]

    def node_slots(self, u: int) -> list[tuple[int, int]]:
        """(edge index, slot) pairs owned by node ``u`` (1-based), edge order."""
        slots = []
        for e, (plus, minus) in enumerate(self.edges):
            if plus == u:
                slots.append((e, 0))
            elif minus == u:
                slots.append((e, 1))
        return slots


def init_state(g: DeviceGraph, dim: int, log_messages: bool = False) -> SolverState:
    """All-zeros initial state (parameters, slots, multipliers, average)."""
    num_edges = g.num_edges
    return SolverState(
        theta=np.zeros((g.num_nodes, dim)),
        beta=np.zeros((num_edges, 2, dim)),
        alpha=np.zeros((num_edges, 2, dim)),
        t=0,
        theta_sum=np.zeros((g.num_nodes, dim)),
        edges=g.edges,
        message_log=[] if log_messages else None,
    )


def _project_rows(rows: np.ndarray, radius: float) -> np.ndarray:
    if not np.isfinite(radius):
        return rows
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    scale = np.ones_like(norms)
    over = norms > radius
    scale[over] = radius / norms[over]
    return rows * scale


def _slot_sum(state: SolverState, u: int, rho: float) -> np.ndarray:
    """Sum of beta_uj + alpha_uj / rho over u's slots, in edge order."""
    total = np.zeros(state.theta.shape[1])
    for e, slot in state.node_slots(u):
        total = total + (state.beta[e, slot] + state.alpha[e, slot] / rho)
    return total


def _draw_batch(rng: np.random.Generator, n: int, batch: int) -> np.ndarray | None:
    """Uniform sample without replacement; full batch draws nothing."""
    if batch >= n:
        return None
    return rng.choice(n, size=batch, replace=False)


def node_step(
    u: int,
    state: SolverState,
    spec: ModelSpec,
    data: DeviceData,
    config: SolverConfig,
    rng: np.random.Generator,
    grad_weight: float = 1.0,
) -> np.ndarray:
    """One stochastic gradient node update for device ``u`` (1-based).

    Reads only device u's data and its own edge slots. ``grad_weight``
    carries the inverse-probability weight under random availability.
    """
    batch = config.batch_size if config.batch_size is not None else min(10, data.n)
    if batch > data.n:
        raise ValueError(f"batch size {batch} exceeds device sample count {data.n}")
    eta = config.kappa / (state.t + 1)
    idx = _draw_batch(rng, data.n, batch)
    grad = batch_gradient(spec, data, idx, state.theta[u - 1]) * grad_weight
    theta_u = state.theta[u - 1]
    degree = len(state.node_slots(u))
    consensus = degree * theta_u - _slot_sum(state, u, config.rho)
    updated = theta_u - eta * (grad + config.rho * consensus)
    return _project_rows(updated, config.projection_radius)


def proximal_node_step(
    u: int,
    state: SolverState,
    spec: ModelSpec,
    data: DeviceData,
    config: SolverConfig,
    rng: np.random.Generator,
    grad_weight: float = 1.0,
) -> np.ndarray:
    """Linearized proximal node update (exact minimizer of the local model).

    With learning rate eta mapped as eta = eta~ / (1 + rho |N_u| eta~) this
    coincides with :func:`node_step`.
    """
    batch = config.batch_size if config.batch_size is not None else min(10, data.n)
    if batch > data.n:
        raise ValueError(f"batch size {batch} exceeds device sample count {data.n}")
    eta = config.kappa / (state.t + 1)
    if eta <= 0.0:
        raise ValueError("learning rate must be positive")
    idx = _draw_batch(rng, data.n, batch)
    grad = batch_gradient(spec, data, idx, state.theta[u - 1]) * grad_weight
    degree = len(state.node_slots(u))
    slot_sum = _slot_sum(state, u, config.rho)
    updated = (state.theta[u - 1] / eta + config.rho * slot_sum - grad) / (
        1.0 / eta + config.rho * degree
    )
    return _project_rows(updated, config.projection_radius)


def edge_step(
    e: int,
    theta_plus: np.ndarray,
    theta_minus: np.ndarray,
    state: SolverState,
    config: SolverConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Edge update for edge index ``e``: prox pair then multiplier ascent.

    Returns (beta_plus, beta_minus, alpha_plus, alpha_minus) for the edge;
    the caller writes them into the state. Reads only the two endpoints.
    """
    rho = config.rho
    lam_edge = config.lam * state.num_nodes
    a = theta_plus - state.alpha[e, 0] / rho
    b = theta_minus - state.alpha[e, 1] / rho
    beta_plus, beta_minus = edge_prox(a, b, lam_edge, rho, config.norm)
    beta_plus = _project_rows(beta_plus, config.projection_radius)
    beta_minus = _project_rows(beta_minus, config.projection_radius)
    alpha_plus = state.alpha[e, 0] - rho * (theta_plus - beta_plus)
    alpha_minus = state.alpha[e, 1] - rho * (theta_minus - beta_minus)
    return beta_plus, beta_minus, alpha_plus, alpha_minus


@dataclass
class SolveResult:
    """Averaged output plus final state; ``p_hat`` is set by availability runs."""

    theta_bar: np.ndarray
    state: SolverState
    p_hat: np.ndarray | None = None


def _specs_list(specs, num_devices: int) -> list[ModelSpec]:
    if isinstance(specs, ModelSpec):
        return [specs] * num_devices
    specs = list(specs)
    if len(specs) != num_devices:
        raise ValueError(f"expected {num_devices} model specs, got {len(specs)}")
    return specs


def _prepare(g: DeviceGraph, specs, data, config: SolverConfig):
    spec_list = _specs_list(specs, g.num_nodes)
    if len(data) != g.num_nodes:
        raise ValueError(f"expected {g.num_nodes} device datasets, got {len(data)}")
    dims = {s.dim for s in spec_list}
    if len(dims) != 1:
        raise ValueError(f"all devices must share one parameter dimension, got {dims}")
    min_n = min(d.n for d in data)
    batch = config.batch_size if config.batch_size is not None else min(10, min_n)
    if batch > min_n:
        raise ValueError(f"batch size {batch} exceeds smallest device sample count {min_n}")
    eplus = np.array([e[0] - 1 for e in g.edges], dtype=np.int64)
    eminus = np.array([e[1] - 1 for e in g.edges], dtype=np.int64)
    deg = g.degrees().astype(np.float64)
    return spec_list, dims.pop(), batch, eplus, eminus, deg


def _edge_phase(
    theta: np.ndarray,
    beta: np.ndarray,
    alpha: np.ndarray,
    eplus: np.ndarray,
    eminus: np.ndarray,
    lam_edge: float,
    rho: float,
    norm: str,
    radius: float,
) -> None:
    """Vectorized edge superstep, in place over beta and alpha."""
    a = theta[eplus] - alpha[:, 0] / rho
    b = theta[eminus] - alpha[:, 1] / rho
    midpoint = 0.5 * (a + b)
    s = prox_phi_rows(norm, a - b, 2.0 * lam_edge / rho)
    beta[:, 0] = _project_rows(midpoint + 0.5 * s, radius)
    beta[:, 1] = _project_rows(midpoint - 0.5 * s, radius)
    alpha[:, 0] -= rho * (theta[eplus] - beta[:, 0])
    alpha[:, 1] -= rho * (theta[eminus] - beta[:, 1])


def run(
    g: DeviceGraph,
    specs: ModelSpec | Sequence[ModelSpec],
    data: Sequence[DeviceData],
    config: SolverConfig,
    *,
    availability: "AvailabilityModel | None" = None,
    callback: Callable[[int, np.ndarray, SolverState], None] | None = None,
    callback_every: int = 1,
    log_messages: bool = False,
) -> SolveResult:
    """Run the stochastic solver for ``config.iterations`` supersteps.

    Returns the running average over the iterates Theta(0)..Theta(T-1).
    With an availability model, online devices take inverse-probability
    weighted gradient steps, offline devices take consensus-only steps,
    and edge updates always run.
    """
    spec_list, dim, batch, eplus, eminus, deg = _prepare(g, specs, data, config)
    num_nodes = g.num_nodes
    state = init_state(g, dim, log_messages)
    batch_rngs = [
        rng_mod.substream(config.seed, rng_mod.DOMAIN_BATCH, u) for u in range(num_nodes)
    ]

    avail_rng = None
    inv_probs = None
    counts = np.zeros(num_nodes)
    p_hat = np.ones(num_nodes)
    if availability is not None:
        if config.variant != "sgd_step":
            raise ValueError("availability runs support the sgd_step variant only")
        avail_rng = rng_mod.substream(config.seed, rng_mod.DOMAIN_AVAILABILITY)
        if availability.known:
            inv_probs = 1.0 / availability.probs

    rho = config.rho
    lam_edge = config.lam * num_nodes
    slot_scatter = np.zeros_like(state.theta)
    for t in range(config.iterations):
        state.theta_sum += state.theta
        eta = config.kappa / (t + 1)

        if availability is not None:
            from .availability import sample_availability

            online = sample_availability(availability, t + 1, avail_rng)
            if availability.known:
                weights = inv_probs
            else:
                # a device online now has frequency at least 1/t, so the
                # running estimate is floored there to keep weights finite
                weights = 1.0 / np.maximum(p_hat, 1.0 / (t + 1))
        else:
            online = np.ones(num_nodes, dtype=bool)
            weights = None

        gradients = np.zeros_like(state.theta)
        for u in range(num_nodes):
            if not online[u]:
                continue
            idx = _draw_batch(batch_rngs[u], data[u].n, batch)
            grad = batch_gradient(spec_list[u], data[u], idx, state.theta[u])
            gradients[u] = grad * weights[u] if weights is not None else grad

        slot_scatter[:] = 0.0
        if g.num_edges:
            slots = state.beta + state.alpha / rho
            np.add.at(slot_scatter, eplus, slots[:, 0])
            np.add.at(slot_scatter, eminus, slots[:, 1])

        if config.variant == "sgd_step":
            consensus = deg[:, None] * state.theta - slot_scatter
            theta_new = state.theta - eta * (gradients + rho * consensus)
        else:
            theta_new = (state.theta / eta + rho * slot_scatter - gradients) / (
                1.0 / eta + rho * deg[:, None]
            )
        theta_new = _project_rows(theta_new, config.projection_radius)
        state.theta = theta_new

        if g.num_edges:
            _edge_phase(
                state.theta,
                state.beta,
                state.alpha,
                eplus,
                eminus,
                lam_edge,
                rho,
                config.norm,
                config.projection_radius,
            )
        if state.message_log is not None:
            for plus, minus in state.edges:
                state.message_log.append((plus, minus, "theta", t + 1))
                state.message_log.append((minus, plus, "beta_alpha", t + 1))

        state.t = t + 1
        if availability is not None:
            counts += online
            p_hat = counts / (t + 1)
        if callback is not None and ((t + 1) % max(callback_every, 1) == 0 or t + 1 == config.iterations):
            callback(t + 1, state.theta_sum / (t + 1), state)

    theta_bar = state.theta_sum / config.iterations
    final_p_hat = p_hat.copy() if availability is not None else None
    return SolveResult(theta_bar=theta_bar, state=state, p_hat=final_p_hat)


def message_audit(state: SolverState) -> list[tuple[int, int, str, int]]:
    """Logged reads that are neither device-local nor along an existing edge."""
    if state.message_log is None:
        raise ValueError("run was executed without message logging")
    edge_set = {e for e in state.edges}
    violations = []
    for reader, source, kind, t in state.message_log:
        if reader == source:
            continue
        key = (max(reader, source), min(reader, source))
        if key not in edge_set:
            violations.append((reader, source, kind, t))
    return violations


@dataclass
class ReferenceResult:
    """Deterministic minimizer with convergence and optimality diagnostics."""

    theta: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    kkt_residual: float


def _exact_node_solvers(spec_list, data, rho: float, deg: np.ndarray):
    """Per-device exact minimizers of the node subproblem, prefactored."""
    solvers = []
    for u, (spec, dev) in enumerate(zip(spec_list, data)):
        d = float(deg[u])
        if spec.family == "mean":
            z_bar = dev.points.mean(axis=0)
            denom = 1.0 / spec.sigma**2 + rho * d
            scale = 1.0 / spec.sigma**2

            def solve_mean(slot_sum, _theta, z_bar=z_bar, denom=denom, scale=scale):
                return (scale * z_bar + rho * slot_sum) / denom

            solvers.append(solve_mean)
        elif spec.family == "linear":
            gram = (dev.covariates.T @ dev.covariates) / dev.n
            rhs = (dev.covariates.T @ dev.responses) / dev.n
            chol = cholesky_with_jitter(gram + rho * d * np.eye(spec.dim))

            def solve_linear(slot_sum, _theta, chol=chol, rhs=rhs):
                b = rhs + rho * slot_sum
                return np.linalg.solve(chol.T, np.linalg.solve(chol, b))

            solvers.append(solve_linear)
        else:

            def solve_logistic(slot_sum, theta, spec=spec, dev=dev, d=d):
                theta = theta.copy()
                for _ in range(60):
                    grad = risk_gradient(spec, dev, theta) + rho * (d * theta - slot_sum)
                    if float(np.linalg.norm(grad)) <= 1e-12:
                        break
                    hess = empirical_hessian(spec, dev, theta) + rho * d * np.eye(spec.dim)
                    theta = theta - solve_psd(hess, grad)
                return theta

            solvers.append(solve_logistic)
    return solvers


def _kkt_residual(
    g: DeviceGraph,
    spec_list,
    data,
    theta: np.ndarray,
    alpha: np.ndarray,
    lam_edge: float,
    norm: str,
) -> float:
    """Worst violation of the stationarity system certified by the multipliers."""
    eplus = [e[0] - 1 for e in g.edges]
    eminus = [e[1] - 1 for e in g.edges]
    alpha_sum = np.zeros_like(theta)
    for e in range(g.num_edges):
        alpha_sum[eplus[e]] += alpha[e, 0]
        alpha_sum[eminus[e]] += alpha[e, 1]
    worst = 0.0
    for u in range(g.num_nodes):
        grad = risk_gradient(spec_list[u], data[u], theta[u])
        worst = max(worst, float(np.max(np.abs(grad - alpha_sum[u]))))
    if lam_edge <= 0.0 or g.num_edges == 0:
        return worst
    for e in range(g.num_edges):
        worst = max(worst, float(np.max(np.abs(alpha[e, 0] + alpha[e, 1]))))
        diff = theta[eplus[e]] - theta[eminus[e]]
        cert = -alpha[e, 0] / lam_edge
        if norm == "l1":
            feasibility = max(float(np.max(np.abs(cert))) - 1.0, 0.0)
            value = float(np.sum(np.abs(diff)))
        else:
            feasibility = max(float(np.linalg.norm(cert)) - 1.0, 0.0)
            value = float(np.linalg.norm(diff))
        worst = max(worst, lam_edge * feasibility)
        # complementarity gap phi(diff) - <cert, diff> is zero exactly when
        # the certificate is a subgradient at diff
        gap = value - float(cert @ diff)
        worst = max(worst, lam_edge * gap / (1.0 + value))
    return worst


def reference_minimizer(
    g: DeviceGraph,
    specs: ModelSpec | Sequence[ModelSpec],
    data: Sequence[DeviceData],
    lam: float,
    norm: str = "l1",
    tol: float = 1e-8,
    *,
    rho: float = 1.0,
    max_iter: int = 200_000,
) -> ReferenceResult:
    """Deterministic full-batch ADMM with exact node minimization.

    Iterates until the primal and dual residuals fall below ``tol`` in the
    infinity norm; validates first-order optimality through the converged
    multipliers. ``lam`` uses the averaged-objective convention.
    """
    if lam < 0.0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    check_norm(norm)
    spec_list = _specs_list(specs, g.num_nodes)
    if len(data) != g.num_nodes:
        raise ValueError(f"expected {g.num_nodes} device datasets, got {len(data)}")
    dims = {s.dim for s in spec_list}
    if len(dims) != 1:
        raise ValueError(f"all devices must share one parameter dimension, got {dims}")
    dim = dims.pop()
    num_nodes, num_edges = g.num_nodes, g.num_edges
    eplus = np.array([e[0] - 1 for e in g.edges], dtype=np.int64)
    eminus = np.array([e[1] - 1 for e in g.edges], dtype=np.int64)
    deg = g.degrees().astype(np.float64)
    lam_edge = lam * num_nodes

    solvers = _exact_node_solvers(spec_list, data, rho, deg)
    theta = np.zeros((num_nodes, dim))
    beta = np.zeros((num_edges, 2, dim))
    alpha = np.zeros((num_edges, 2, dim))
    slot_scatter = np.zeros_like(theta)

    primal = dual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        slot_scatter[:] = 0.0
        if num_edges:
            slots = beta + alpha / rho
            np.add.at(slot_scatter, eplus, slots[:, 0])
            np.add.at(slot_scatter, eminus, slots[:, 1])
        for u in range(num_nodes):
            theta[u] = solvers[u](slot_scatter[u], theta[u])

        if num_edges == 0:
            primal = dual = 0.0
            break
        beta_old = beta.copy()
        _edge_phase(theta, beta, alpha, eplus, eminus, lam_edge, rho, norm, math.inf)
        primal = max(
            float(np.max(np.abs(theta[eplus] - beta[:, 0]))),
            float(np.max(np.abs(theta[eminus] - beta[:, 1]))),
        )
        dual = rho * float(np.max(np.abs(beta - beta_old)))
        if primal <= tol and dual <= tol:
            break
    else:
        raise NumericError(
            f"reference solver did not converge in {max_iter} iterations "
            f"(primal={primal:.3e}, dual={dual:.3e})"
        )

    kkt = _kkt_residual(g, spec_list, data, theta, alpha, lam_edge, norm)
    kkt_limit = 10.0 * tol * (1.0 + rho * float(deg.max(initial=0.0)) + lam_edge)
    if kkt > kkt_limit:
        raise NumericError(
            f"reference solution failed the optimality check: residual {kkt:.3e} "
            f"exceeds {kkt_limit:.3e}"
        )
    return ReferenceResult(
        theta=theta,
        iterations=iterations,
        primal_residual=primal,
        dual_residual=dual,
        kkt_residual=kkt,
    )

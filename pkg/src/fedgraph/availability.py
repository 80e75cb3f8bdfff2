"""Random device inaccessibility and the inverse-probability-weighted solver.

Each iteration, every device is online independently with its own
probability (or through a shared uniform draw, which couples devices within
an iteration but keeps the marginals). Online devices take gradient steps
with the gradient scaled by the reciprocal of their availability
probability, which keeps the update direction unbiased; offline devices
drift by the consensus term only, computed by the simulated coordinator.
When probabilities are unknown they are estimated online from availability
frequencies, starting from 1 before anything is observed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .admm import SolveResult, SolverConfig, node_step, run
from .graph import DeviceGraph
from .models import DeviceData, ModelSpec

__all__ = [
    "AvailabilityModel",
    "sample_availability",
    "ipw_node_step",
    "estimate_p",
    "run_with_availability",
]

MODES = ("independent", "shared_coin")


@dataclass(frozen=True)
class AvailabilityModel:
    """Per-device availability probabilities and how they are sampled."""

    probs: np.ndarray
    known: bool = True
    mode: str = "independent"

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ValueError(f"probs must be a vector, got shape {probs.shape}")
        if not np.all((probs > 0.0) & (probs <= 1.0)):
            raise ValueError("every availability probability must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @classmethod
    def uniform(cls, num_devices: int, p: float, known: bool = True, mode: str = "independent"):
        return cls(probs=np.full(num_devices, float(p)), known=known, mode=mode)


def sample_availability(
    model: AvailabilityModel, t: int, rng: np.random.Generator
) -> np.ndarray:
    """Boolean online mask for iteration ``t`` (>= 1)."""
    if t < 1:
        raise ValueError(f"iteration index must be >= 1, got {t}")
    if model.mode == "independent":
        return rng.random(model.probs.shape[0]) < model.probs
    coin = rng.random()
    return coin <= model.probs


def ipw_node_step(
    u: int,
    online: bool,
    state,
    spec: ModelSpec,
    data: DeviceData,
    config: SolverConfig,
    p_u: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Node update under random availability for device ``u`` (1-based).

    Online: the usual step with the gradient scaled by 1 / p_u. Offline:
    consensus-only drift with no data access.
    """
    if not p_u > 0.0:
        raise ValueError(f"availability probability must be positive, got {p_u}")
    if online:
        return node_step(u, state, spec, data, config, rng, grad_weight=1.0 / p_u)
    eta = config.kappa / (state.t + 1)
    theta_u = state.theta[u - 1]
    slot_sum = np.zeros_like(theta_u)
    for e, slot in state.node_slots(u):
        slot_sum = slot_sum + (state.beta[e, slot] + state.alpha[e, slot] / config.rho)
    degree = len(state.node_slots(u))
    return theta_u - eta * config.rho * (degree * theta_u - slot_sum)


def estimate_p(history: np.ndarray, t: int) -> np.ndarray:
    """Running availability frequencies after ``t`` observed iterations.

    ``history`` holds one 0/1 row per iteration; with ``t == 0`` every
    estimate is initialized to 1.
    """
    history = np.asarray(history, dtype=np.float64)
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if t == 0:
        width = history.shape[1] if history.ndim == 2 else history.shape[0]
        return np.ones(width)
    if history.ndim != 2 or history.shape[0] < t:
        raise ValueError(f"history must hold at least {t} iteration rows")
    return history[:t].mean(axis=0)


def run_with_availability(
    g: DeviceGraph,
    specs: ModelSpec | Sequence[ModelSpec],
    data: Sequence[DeviceData],
    config: SolverConfig,
    model: AvailabilityModel,
) -> SolveResult:
    """Stochastic solver with randomly inaccessible devices.

    With all probabilities equal to 1 this reproduces the plain solver
    bit for bit at the same seed.
    """
    if model.probs.shape[0] != g.num_nodes:
        raise ValueError(
            f"availability model covers {model.probs.shape[0]} devices, graph has {g.num_nodes}"
        )
    return run(g, specs, data, config, availability=model)

"""Loss families, gradients, empirical Hessians, and per-device estimators.

Three families are supported:

* ``mean``: Gaussian mean estimation, squared error scaled by the noise
  variance; a sample is a p-vector.
* ``linear``: least squares; a sample is a pair (x, y) with x a p-vector.
* ``logistic``: binary logistic regression with labels in {0, 1}.

All operations are stateless functions on immutable inputs and safe to call
concurrently across devices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import NumericError, inverse_psd, solve_psd

__all__ = [
    "FAMILIES",
    "ModelSpec",
    "DeviceData",
    "LocalFit",
    "loss",
    "grad_psi",
    "empirical_risk",
    "risk_gradient",
    "batch_gradient",
    "empirical_hessian",
    "local_estimate",
    "hessian_eigen_diagnostics",
]

FAMILIES = ("mean", "linear", "logistic")


@dataclass(frozen=True)
class ModelSpec:
    """Loss family, parameter dimension, and (mean family) noise scale."""

    family: str
    dim: int
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class DeviceData:
    """Samples observed on one device.

    Regression families carry ``covariates`` (n, p) and ``responses`` (n,);
    the mean family carries ``points`` (n, p).
    """

    covariates: np.ndarray | None = None
    responses: np.ndarray | None = None
    points: np.ndarray | None = None

    @classmethod
    def from_xy(cls, x: np.ndarray, y: np.ndarray) -> "DeviceData":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"covariates must be 2-d, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"responses shape {y.shape} does not match {x.shape[0]} rows")
        if x.shape[0] < 1:
            raise ValueError("device must hold at least one sample")
        return cls(covariates=x, responses=y)

    @classmethod
    def from_points(cls, z: np.ndarray) -> "DeviceData":
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2:
            raise ValueError(f"points must be 2-d, got shape {z.shape}")
        if z.shape[0] < 1:
            raise ValueError("device must hold at least one sample")
        return cls(points=z)

    @property
    def n(self) -> int:
        if self.points is not None:
            return self.points.shape[0]
        assert self.covariates is not None
        return self.covariates.shape[0]


def validate_device_data(spec: ModelSpec, data: DeviceData) -> None:
    if spec.family == "mean":
        if data.points is None:
            raise ValueError("mean family requires point samples")
        if data.points.shape[1] != spec.dim:
            raise ValueError(
                f"sample dimension {data.points.shape[1]} does not match dim {spec.dim}"
            )
        return
    if data.covariates is None or data.responses is None:
        raise ValueError(f"{spec.family} family requires covariates and responses")
    if data.covariates.shape[1] != spec.dim:
        raise ValueError(
            f"covariate dimension {data.covariates.shape[1]} does not match dim {spec.dim}"
        )
    if spec.family == "logistic":
        y = data.responses
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("logistic responses must lie in {0, 1}")


def _zeta(t: np.ndarray) -> np.ndarray:
    """log(1 + exp(t)) computed without overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def _sigmoid(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    expt = np.exp(t[~pos])
    out[~pos] = expt / (1.0 + expt)
    return out


def _check_theta(spec: ModelSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.dim,):
        raise ValueError(f"theta shape {theta.shape} does not match dim {spec.dim}")
    return theta


def loss(spec: ModelSpec, z, theta: np.ndarray) -> float:
    """Per-sample loss m(z; theta).

    ``z`` is a p-vector for the mean family and an (x, y) pair otherwise.
    """
    theta = _check_theta(spec, theta)
    if spec.family == "mean":
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (spec.dim,):
            raise ValueError(f"sample shape {z.shape} does not match dim {spec.dim}")
        diff = z - theta
        return float(diff @ diff) / (2.0 * spec.sigma**2)
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.dim,):
        raise ValueError(f"covariate shape {x.shape} does not match dim {spec.dim}")
    margin = float(theta @ x)
    if spec.family == "linear":
        return 0.5 * (float(y) - margin) ** 2
    return float(_zeta(margin)) - float(y) * margin


def grad_psi(spec: ModelSpec, z, theta: np.ndarray) -> np.ndarray:
    """Per-sample loss gradient psi(z; theta)."""
    theta = _check_theta(spec, theta)
    if spec.family == "mean":
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (spec.dim,):
            raise ValueError(f"sample shape {z.shape} does not match dim {spec.dim}")
        return (theta - z) / spec.sigma**2
    x, y = z
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.dim,):
        raise ValueError(f"covariate shape {x.shape} does not match dim {spec.dim}")
    margin = float(theta @ x)
    if spec.family == "linear":
        return -(float(y) - margin) * x
    return (float(_sigmoid(margin)) - float(y)) * x


def empirical_risk(spec: ModelSpec, data: DeviceData, theta: np.ndarray) -> float:
    """Average loss over the device's samples."""
    theta = _check_theta(spec, theta)
    validate_device_data(spec, data)
    if spec.family == "mean":
        diff = data.points - theta
        return float(np.sum(diff * diff)) / (2.0 * spec.sigma**2 * data.n)
    margins = data.covariates @ theta
    if spec.family == "linear":
        resid = data.responses - margins
        return 0.5 * float(resid @ resid) / data.n
    return float(np.mean(_zeta(margins) - data.responses * margins))


def risk_gradient(spec: ModelSpec, data: DeviceData, theta: np.ndarray) -> np.ndarray:
    """Gradient of the average loss: the sample mean of psi."""
    return batch_gradient(spec, data, None, theta)


def batch_gradient(
    spec: ModelSpec, data: DeviceData, idx: np.ndarray | None, theta: np.ndarray
) -> np.ndarray:
    """Mean of psi over the samples selected by ``idx`` (all samples if None)."""
    theta = _check_theta(spec, theta)
    if spec.family == "mean":
        pts = data.points if idx is None else data.points[idx]
        return (theta - pts.mean(axis=0)) / spec.sigma**2
    x = data.covariates if idx is None else data.covariates[idx]
    y = data.responses if idx is None else data.responses[idx]
    margins = x @ theta
    if spec.family == "linear":
        return -(x.T @ (y - margins)) / x.shape[0]
    return (x.T @ (_sigmoid(margins) - y)) / x.shape[0]


def empirical_hessian(spec: ModelSpec, data: DeviceData, theta: np.ndarray) -> np.ndarray:
    """Average Hessian of the loss over the device's samples."""
    theta = _check_theta(spec, theta)
    validate_device_data(spec, data)
    p = spec.dim
    if spec.family == "mean":
        return np.eye(p) / spec.sigma**2
    x = data.covariates
    if spec.family == "linear":
        return (x.T @ x) / x.shape[0]
    weights = _sigmoid(x @ theta)
    weights = weights * (1.0 - weights)
    return (x.T * weights) @ x / x.shape[0]


@dataclass(frozen=True)
class LocalFit:
    """Per-device estimate with its estimated asymptotic covariance."""

    theta_hat: np.ndarray
    omega_hat: np.ndarray
    converged: bool
    iterations: int


def _omega_hat(spec: ModelSpec, data: DeviceData, theta: np.ndarray) -> np.ndarray:
    return inverse_psd(data.n * empirical_hessian(spec, data, theta))


def local_estimate(
    spec: ModelSpec,
    data: DeviceData,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> LocalFit:
    """Unpenalized per-device fit.

    Mean family: the sample mean. Linear: normal-equations solve. Logistic:
    Newton with step halving until the gradient norm drops below ``tol``; on
    non-convergence the best iterate is returned with ``converged=False``.
    """
    validate_device_data(spec, data)
    if spec.family == "mean":
        theta = data.points.mean(axis=0)
        return LocalFit(theta, _omega_hat(spec, data, theta), True, 0)

    if spec.family == "linear":
        x, y = data.covariates, data.responses
        gram = (x.T @ x) / data.n
        rhs = (x.T @ y) / data.n
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            cond = float(np.linalg.cond(gram))
            raise NumericError(f"singular normal equations (cond={cond:.3e})") from exc
        theta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        return LocalFit(theta, _omega_hat(spec, data, theta), True, 0)

    theta = np.zeros(spec.dim)
    grad = risk_gradient(spec, data, theta)
    iterations = 0
    while float(np.linalg.norm(grad)) > tol and iterations < max_iter:
        hess = empirical_hessian(spec, data, theta)
        step = solve_psd(hess, grad)
        value = empirical_risk(spec, data, theta)
        decrement = float(grad @ step)
        scale = 1.0
        for _ in range(30):
            if empirical_risk(spec, data, theta - scale * step) <= value - 1e-4 * scale * decrement:
                break
            scale *= 0.5
        theta = theta - scale * step
        grad = risk_gradient(spec, data, theta)
        iterations += 1
    converged = float(np.linalg.norm(grad)) <= tol
    return LocalFit(theta, _omega_hat(spec, data, theta), converged, iterations)


def hessian_eigen_diagnostics(
    spec: ModelSpec, data: DeviceData, theta: np.ndarray
) -> tuple[float, float]:
    """Extreme eigenvalues of the empirical Hessian at ``theta``."""
    eigenvalues = np.linalg.eigvalsh(empirical_hessian(spec, data, theta))
    return float(eigenvalues[0]), float(eigenvalues[-1])

"""Small shared linear-algebra helpers with the package's jitter policy."""

from __future__ import annotations

import numpy as np

__all__ = ["NumericError", "cholesky_with_jitter", "solve_psd", "inverse_psd"]


class NumericError(RuntimeError):
    """A numerical routine failed (singular system, non-convergence, non-PD matrix)."""


def cholesky_with_jitter(a: np.ndarray) -> np.ndarray:
    """Cholesky factor of a symmetric matrix expected to be positive definite.

    On failure, adds diagonal jitter 1e-10 * trace(a)/p once and retries;
    a second failure is a hard error.
    """
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    p = a.shape[0]
    jitter = 1e-10 * float(np.trace(a)) / max(p, 1)
    if jitter <= 0.0:
        jitter = 1e-12
    try:
        return np.linalg.cholesky(a + jitter * np.eye(p))
    except np.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(a))
        raise NumericError(
            f"matrix not positive definite after jitter {jitter:.3e} (cond={cond:.3e})"
        ) from exc


def solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for symmetric positive definite a via Cholesky."""
    chol = cholesky_with_jitter(a)
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


def inverse_psd(a: np.ndarray) -> np.ndarray:
    return solve_psd(a, np.eye(a.shape[0]))

import math

import numpy as np
import pytest

from fedgraph.linalg import NumericError
from fedgraph.models import (
    DeviceData,
    ModelSpec,
    batch_gradient,
    empirical_hessian,
    empirical_risk,
    grad_psi,
    hessian_eigen_diagnostics,
    local_estimate,
    loss,
    risk_gradient,
)


def _fd_gradient(fn, theta, step=1e-5):
    """Central finite differences of a scalar function."""
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        up = theta.copy()
        down = theta.copy()
        up[k] += step
        down[k] -= step
        grad[k] = (fn(up) - fn(down)) / (2 * step)
    return grad


def _random_sample(rng, spec):
    if spec.family == "mean":
        return rng.normal(size=spec.dim)
    x = rng.normal(size=spec.dim)
    if spec.family == "linear":
        return (x, rng.normal())
    return (x, float(rng.integers(0, 2)))


class TestSpecValidation:
    def test_bad_family(self):
        with pytest.raises(ValueError):
            ModelSpec("poisson", 2)

    def test_bad_dim_and_sigma(self):
        with pytest.raises(ValueError):
            ModelSpec("mean", 0)
        with pytest.raises(ValueError):
            ModelSpec("mean", 2, sigma=0.0)

    def test_logistic_labels_checked(self):
        spec = ModelSpec("logistic", 2)
        data = DeviceData.from_xy(np.ones((3, 2)), np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            empirical_risk(spec, data, np.zeros(2))


class TestLoss:
    def test_mean_zero_residual(self):
        spec = ModelSpec("mean", 2)
        theta = np.array([1.0, -2.0])
        assert loss(spec, theta.copy(), theta) == 0.0

    def test_linear_exact_fit(self):
        spec = ModelSpec("linear", 2)
        assert loss(spec, (np.array([1.0, 1.0]), 2.0), np.array([1.0, 1.0])) == 0.0

    def test_logistic_zero_margin(self):
        spec = ModelSpec("logistic", 2)
        value = loss(spec, (np.zeros(2), 1.0), np.array([3.0, -1.0]))
        assert value == pytest.approx(math.log(2.0))

    def test_logistic_no_overflow(self):
        spec = ModelSpec("logistic", 1)
        big = loss(spec, (np.array([1.0]), 0.0), np.array([500.0]))
        assert np.isfinite(big) and big == pytest.approx(500.0)

    def test_dimension_mismatch(self):
        spec = ModelSpec("mean", 3)
        with pytest.raises(ValueError):
            loss(spec, np.zeros(2), np.zeros(3))
        with pytest.raises(ValueError):
            loss(spec, np.zeros(3), np.zeros(2))


class TestGradient:
    def test_mean_zero_at_sample(self):
        spec = ModelSpec("mean", 3)
        z = np.array([1.0, 2.0, 3.0])
        assert np.allclose(grad_psi(spec, z, z.copy()), 0.0)

    def test_linear_example(self):
        spec = ModelSpec("linear", 2)
        g = grad_psi(spec, (np.array([1.0, 0.0]), 0.0), np.array([1.0, 0.0]))
        assert np.allclose(g, [1.0, 0.0])

    @pytest.mark.parametrize("family", ["mean", "linear", "logistic"])
    def test_matches_finite_differences(self, family):
        rng = np.random.default_rng(17)
        spec = ModelSpec(family, 4, sigma=1.3)
        for _ in range(100):
            z = _random_sample(rng, spec)
            theta = rng.normal(size=4)
            grad = grad_psi(spec, z, theta)
            approx = _fd_gradient(lambda th: loss(spec, z, th), theta)
            denom = max(1.0, float(np.linalg.norm(grad)))
            assert np.linalg.norm(grad - approx) / denom <= 1e-6


class TestHessian:
    def test_mean_identity(self):
        spec = ModelSpec("mean", 3, sigma=1.0)
        data = DeviceData.from_points(np.zeros((2, 3)))
        assert np.array_equal(empirical_hessian(spec, data, np.zeros(3)), np.eye(3))

    def test_linear_two_basis_rows(self):
        spec = ModelSpec("linear", 2)
        data = DeviceData.from_xy(np.eye(2), np.zeros(2))
        assert np.allclose(empirical_hessian(spec, data, np.zeros(2)), 0.5 * np.eye(2))

    def test_logistic_matches_fd_of_gradient(self):
        rng = np.random.default_rng(5)
        spec = ModelSpec("logistic", 3)
        x = rng.normal(size=(20, 3))
        y = (rng.random(20) < 0.5).astype(float)
        data = DeviceData.from_xy(x, y)
        theta = rng.normal(size=3) * 0.5
        hess = empirical_hessian(spec, data, theta)
        step = 1e-5
        fd = np.zeros((3, 3))
        for k in range(3):
            up, down = theta.copy(), theta.copy()
            up[k] += step
            down[k] -= step
            fd[:, k] = (risk_gradient(spec, data, up) - risk_gradient(spec, data, down)) / (2 * step)
        assert np.abs(hess - fd).max() <= 1e-5

    def test_symmetric_psd(self):
        rng = np.random.default_rng(6)
        for family in ("linear", "logistic"):
            spec = ModelSpec(family, 3)
            x = rng.normal(size=(8, 3))
            y = (rng.random(8) < 0.5).astype(float) if family == "logistic" else rng.normal(size=8)
            data = DeviceData.from_xy(x, y)
            h = empirical_hessian(spec, data, rng.normal(size=3))
            assert np.allclose(h, h.T)
            assert np.linalg.eigvalsh(h)[0] >= -1e-12


class TestLocalEstimate:
    def test_mean_sample_mean(self):
        spec = ModelSpec("mean", 2)
        data = DeviceData.from_points(np.array([[1.0, 1.0], [3.0, 3.0]]))
        fit = local_estimate(spec, data)
        assert np.allclose(fit.theta_hat, [2.0, 2.0])
        assert fit.converged

    def test_linear_noiseless_recovery(self):
        rng = np.random.default_rng(8)
        spec = ModelSpec("linear", 4)
        theta_star = rng.normal(size=4)
        x = rng.normal(size=(12, 4))
        data = DeviceData.from_xy(x, x @ theta_star)
        fit = local_estimate(spec, data)
        assert np.abs(fit.theta_hat - theta_star).max() <= 1e-10

    def test_linear_normal_equations_residual(self):
        rng = np.random.default_rng(9)
        spec = ModelSpec("linear", 3)
        x = rng.normal(size=(30, 3))
        y = x @ rng.normal(size=3) + rng.normal(size=30)
        fit = local_estimate(spec, DeviceData.from_xy(x, y))
        residual = x.T @ (y - x @ fit.theta_hat) / 30
        assert np.abs(residual).max() <= 1e-10

    def test_singular_design_reported(self):
        spec = ModelSpec("linear", 2)
        x = np.array([[1.0, 1.0]] * 3)
        with pytest.raises(NumericError, match="cond"):
            local_estimate(spec, DeviceData.from_xy(x, np.ones(3)))

    def test_logistic_kkt_residual(self):
        rng = np.random.default_rng(10)
        spec = ModelSpec("logistic", 3)
        x = rng.normal(size=(60, 3))
        margins = x @ np.array([0.5, -0.25, 0.1])
        y = (rng.random(60) < 1 / (1 + np.exp(-margins))).astype(float)
        fit = local_estimate(spec, DeviceData.from_xy(x, y), tol=1e-9)
        assert fit.converged
        grad = risk_gradient(spec, DeviceData.from_xy(x, y), fit.theta_hat)
        assert np.linalg.norm(grad) <= 1e-8

    def test_omega_halves_when_data_doubles(self):
        rng = np.random.default_rng(11)
        for family in ("mean", "linear"):
            spec = ModelSpec(family, 3)
            if family == "mean":
                z = rng.normal(size=(15, 3))
                single = DeviceData.from_points(z)
                double = DeviceData.from_points(np.vstack([z, z]))
            else:
                x = rng.normal(size=(15, 3))
                y = rng.normal(size=15)
                single = DeviceData.from_xy(x, y)
                double = DeviceData.from_xy(np.vstack([x, x]), np.concatenate([y, y]))
            omega_1 = local_estimate(spec, single).omega_hat
            omega_2 = local_estimate(spec, double).omega_hat
            assert np.allclose(omega_2, omega_1 / 2, rtol=1e-12, atol=1e-15)


class TestEigenDiagnostics:
    def test_mean_family(self):
        spec = ModelSpec("mean", 3, sigma=2.0)
        data = DeviceData.from_points(np.zeros((4, 3)))
        lmin, lmax = hessian_eigen_diagnostics(spec, data, np.zeros(3))
        assert lmin == pytest.approx(0.25) and lmax == pytest.approx(0.25)

    def test_rank_deficient_design(self):
        spec = ModelSpec("linear", 3)
        x = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        data = DeviceData.from_xy(x, np.zeros(2))
        lmin, _ = hessian_eigen_diagnostics(spec, data, np.zeros(3))
        assert lmin == pytest.approx(0.0, abs=1e-12)

    def test_logistic_matches_dense_eigensolve(self):
        rng = np.random.default_rng(12)
        spec = ModelSpec("logistic", 4)
        x = rng.normal(size=(25, 4))
        y = (rng.random(25) < 0.5).astype(float)
        data = DeviceData.from_xy(x, y)
        theta = rng.normal(size=4)
        lmin, lmax = hessian_eigen_diagnostics(spec, data, theta)
        reference = np.linalg.eigvalsh(empirical_hessian(spec, data, theta))
        assert lmin == pytest.approx(reference[0], abs=1e-8)
        assert lmax == pytest.approx(reference[-1], abs=1e-8)


class TestBatchGradient:
    def test_full_batch_is_risk_gradient(self):
        rng = np.random.default_rng(13)
        spec = ModelSpec("linear", 3)
        data = DeviceData.from_xy(rng.normal(size=(10, 3)), rng.normal(size=10))
        theta = rng.normal(size=3)
        assert np.allclose(
            batch_gradient(spec, data, None, theta), risk_gradient(spec, data, theta)
        )

    def test_minibatch_mean_of_psi(self):
        rng = np.random.default_rng(14)
        spec = ModelSpec("logistic", 2)
        x = rng.normal(size=(9, 2))
        y = (rng.random(9) < 0.5).astype(float)
        data = DeviceData.from_xy(x, y)
        theta = rng.normal(size=2)
        idx = np.array([1, 4, 7])
        expected = np.mean([grad_psi(spec, (x[i], y[i]), theta) for i in idx], axis=0)
        assert np.allclose(batch_gradient(spec, data, idx, theta), expected)

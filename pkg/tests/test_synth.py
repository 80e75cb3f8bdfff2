import numpy as np
import pytest

from fedgraph.models import ModelSpec, local_estimate
from fedgraph.synth import (
    SynthConfig,
    build_dataset,
    gen_clusters,
    gen_device_data,
    gen_parameters,
)


class TestGenClusters:
    def test_even_partition(self):
        clustering = gen_clusters(20, 5)
        sizes = [clustering.labels.count(k) for k in range(1, 6)]
        assert sizes == [4, 4, 4, 4, 4]

    def test_singletons(self):
        clustering = gen_clusters(5, 5)
        assert clustering.labels == (1, 2, 3, 4, 5)

    def test_remainder_to_low_labels(self):
        clustering = gen_clusters(7, 2)
        assert clustering.labels.count(1) == 4 and clustering.labels.count(2) == 3

    def test_too_many_clusters(self):
        with pytest.raises(ValueError):
            gen_clusters(3, 4)


class TestGenParameters:
    def test_zero_mean(self):
        rng = np.random.default_rng(0)
        draws = gen_parameters(10_000, 4, rng)
        se = (4 ** -0.25) / np.sqrt(draws.shape[0])
        assert np.abs(draws.mean(axis=0)).max() <= 4 * se

    def test_variance_scaling(self):
        rng = np.random.default_rng(1)
        p = 20
        draws = gen_parameters(10_000, p, rng)
        target = p ** -0.5
        variances = draws.var(axis=0)
        assert np.all(np.abs(variances - target) <= 0.05 * target)

    def test_seed_determinism(self):
        a = gen_parameters(3, 5, np.random.default_rng(7))
        b = gen_parameters(3, 5, np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestGenDeviceData:
    def test_linear_pure_noise_variance(self):
        rng = np.random.default_rng(2)
        data = gen_device_data("linear", np.zeros(3), 10_000, rng)
        assert abs(data.responses.var() - 1.0) <= 0.1

    def test_mean_zero_sigma(self):
        rng = np.random.default_rng(3)
        theta = np.array([1.0, -2.0])
        data = gen_device_data("mean", theta, 5, rng, sigma=1e-300)
        assert np.allclose(data.points, theta)

    def test_ols_error_scales_like_p_over_n(self):
        rng = np.random.default_rng(4)
        p, n = 20, 200
        spec = ModelSpec("linear", p)
        errors = []
        for rep in range(100):
            theta_star = gen_parameters(1, p, rng)[0]
            data = gen_device_data("linear", theta_star, n, rng)
            fit = local_estimate(spec, data)
            errors.append(float(np.sum((fit.theta_hat - theta_star) ** 2)))
        mean_error = np.mean(errors)
        assert p / n / 2 <= mean_error <= 2 * p / n

    def test_logistic_labels(self):
        rng = np.random.default_rng(5)
        data = gen_device_data("logistic", np.array([2.0, 0.0]), 50, rng)
        assert set(np.unique(data.responses)) <= {0.0, 1.0}


class TestPipeline:
    def _config(self, **overrides):
        base = dict(
            num_devices=12,
            clusters=3,
            dim=4,
            samples_per_device=8,
            family="linear",
            corruption=0.2,
            seed=11,
        )
        base.update(overrides)
        return SynthConfig(**base)

    def test_bit_reproducible(self):
        a = build_dataset(self._config())
        b = build_dataset(self._config())
        assert np.array_equal(a.theta_star, b.theta_star)
        assert a.graph.edges == b.graph.edges
        for left, right in zip(a.data, b.data):
            assert np.array_equal(left.covariates, right.covariates)
            assert np.array_equal(left.responses, right.responses)

    def test_same_cluster_shares_parameter(self):
        ds = build_dataset(self._config())
        for u in range(ds.config.num_devices):
            for v in range(u + 1, ds.config.num_devices):
                same = ds.clustering.labels[u] == ds.clustering.labels[v]
                equal = np.array_equal(ds.theta_star[u], ds.theta_star[v])
                assert same == equal

    def test_characteristic_graph_matches_clusters(self):
        ds = build_dataset(self._config())
        for plus, minus in ds.graph0.edges:
            assert ds.clustering.labels[plus - 1] == ds.clustering.labels[minus - 1]

    def test_zero_corruption_keeps_graph(self):
        ds = build_dataset(self._config(corruption=0.0))
        assert ds.graph.edges == ds.graph0.edges

    def test_invalid_corruption(self):
        with pytest.raises(ValueError):
            self._config(corruption=1.5)

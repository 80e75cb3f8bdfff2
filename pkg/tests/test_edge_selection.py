import numpy as np
import pytest

from fedgraph.chi2 import chi2_quantile
from fedgraph.edge_selection import (
    evaluate_edges,
    local_es_candidate_graph,
    min_signal_satisfied,
    select_edges,
    signal_distance,
)
from fedgraph.edge_selection import test_statistic as wald_statistic
from fedgraph.graph import build_graph, characteristic_graph, connected_components
from fedgraph.models import DeviceData, LocalFit, ModelSpec, local_estimate
from fedgraph.synth import gen_clusters, gen_device_data


def _fit(theta, omega):
    return LocalFit(np.asarray(theta, float), np.asarray(omega, float), True, 0)


class TestStatistic:
    def test_equal_estimates(self):
        fit = _fit([1.0, 2.0], np.eye(2))
        assert wald_statistic(fit, fit) == pytest.approx(0.0)

    def test_identity_metric(self):
        a = _fit([1.0, 0.0], 0.5 * np.eye(2))
        b = _fit([0.0, 1.0], 0.5 * np.eye(2))
        assert wald_statistic(a, b) == pytest.approx(2.0)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = int(rng.integers(1, 6))
            d = rng.normal(size=p)
            m1 = rng.normal(size=(p, p))
            m2 = rng.normal(size=(p, p))
            omega_1 = m1 @ m1.T + 0.5 * np.eye(p)
            omega_2 = m2 @ m2.T + 0.5 * np.eye(p)
            a = _fit(d, omega_1)
            b = _fit(np.zeros(p), omega_2)
            expected = float(d @ np.linalg.inv(omega_1 + omega_2) @ d)
            assert wald_statistic(a, b) == pytest.approx(expected, abs=1e-9, rel=1e-9)

    def test_scale_equivariance_pivot(self):
        # scaling responses by c scales estimates by c and covariances by c^2
        rng = np.random.default_rng(1)
        d = rng.normal(size=3)
        m = rng.normal(size=(3, 3))
        omega = m @ m.T + np.eye(3)
        a, b = _fit(d, omega), _fit(np.zeros(3), omega)
        base = wald_statistic(a, b)
        c = 3.7
        scaled = wald_statistic(_fit(c * d, c**2 * omega), _fit(np.zeros(3), c**2 * omega))
        assert scaled == pytest.approx(base, rel=1e-10)


class TestSelectEdges:
    def _report(self, stats, num_nodes=4, dim=2, alpha=0.05):
        g = build_graph(num_nodes, [(1, 2), (2, 3), (3, 4)])
        return select_edges(g, np.asarray(stats, float), dim, alpha)

    def test_all_zero_statistics_keep_everything(self):
        report = self._report([0.0, 0.0, 0.0])
        assert report.keep.all()
        assert report.selected_graph().num_edges == 3

    def test_all_above_threshold_keep_nothing(self):
        report = self._report([1e6, 1e6, 1e6])
        assert not report.keep.any()
        assert report.selected_graph().num_edges == 0

    def test_tie_at_threshold_kept(self):
        g = build_graph(2, [(1, 2)])
        threshold = chi2_quantile(2, 0.05)
        report = select_edges(g, np.array([threshold]), 2, 0.05)
        assert report.keep[0]

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(2)
        stats = rng.chisquare(3, size=3)
        rejected_small = ~self._report(stats, dim=3, alpha=0.01).keep
        rejected_large = ~self._report(stats, dim=3, alpha=0.2).keep
        assert np.all(rejected_small <= rejected_large)

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            self._report([0.0, 0.0, 0.0], alpha=0.0)


class TestSignalDistance:
    def test_zero_for_equal(self):
        omega = np.eye(2)
        assert signal_distance(np.ones(2), np.ones(2), omega, omega, 1.0, 1.0) == 0.0

    def test_identity_metric_euclidean(self):
        omega = 0.5 * np.eye(2)
        d = signal_distance(np.array([1.0, 0.0]), np.zeros(2), omega, omega, 1.0, 1.0)
        assert d == pytest.approx(1.0)

    def test_boundary_flip(self):
        p, alpha, num_edges = 2, 0.05, 10
        threshold = chi2_quantile(p, alpha / num_edges)
        n_e = 100
        dist = np.sqrt(4.0 * threshold / n_e)
        assert min_signal_satisfied(dist, n_e, p, alpha, num_edges)
        assert not min_signal_satisfied(dist * (1 - 1e-9), n_e, p, alpha, num_edges)

    def test_weight_range(self):
        omega = np.eye(2)
        with pytest.raises(ValueError):
            signal_distance(np.ones(2), np.zeros(2), omega, omega, 0.0, 1.0)


def _two_cluster_fits(rng, n, p, separation):
    """Local fits for two linear clusters of 3 devices each."""
    spec = ModelSpec("linear", p)
    theta_a = np.zeros(p)
    theta_b = np.zeros(p)
    theta_b[0] = separation
    fits = []
    for theta in [theta_a] * 3 + [theta_b] * 3:
        data = gen_device_data("linear", theta, n, rng)
        fits.append(local_estimate(spec, data))
    return fits


class TestEvaluateEdges:
    def test_recovers_cluster_structure(self):
        rng = np.random.default_rng(7)
        alpha = 0.05
        n, p = 500, 5
        clustering = gen_clusters(6, 2)
        g0 = characteristic_graph(clustering)
        complete = build_graph(6, [(i, j) for i in range(1, 7) for j in range(i + 1, 7)])
        threshold = chi2_quantile(p, alpha / complete.num_edges)
        separation = np.sqrt(8.0 * threshold / n)  # twice the minimum signal
        hits = 0
        reps = 50
        for _ in range(reps):
            fits = _two_cluster_fits(rng, n, p, separation)
            report = evaluate_edges(complete, fits, alpha)
            if report.selected_graph().edge_set() == g0.edge_set():
                hits += 1
        assert hits >= 0.9 * reps


class TestLocalEsCandidateGraph:
    def test_homogeneous_devices_merge(self):
        rng = np.random.default_rng(8)
        spec = ModelSpec("linear", 3)
        hits = 0
        reps = 30
        for _ in range(reps):
            fits = [
                local_estimate(spec, gen_device_data("linear", np.ones(3), 400, rng))
                for _ in range(5)
            ]
            selected = local_es_candidate_graph(fits, 0.05)
            _, k = connected_components(selected)
            if k == 1:
                hits += 1
        assert hits >= 0.9 * reps

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(9)
        hits = 0
        reps = 30
        for _ in range(reps):
            fits = _two_cluster_fits(rng, 500, 5, separation=2.0)
            selected = local_es_candidate_graph(fits, 0.05)
            clustering, k = connected_components(selected)
            if k == 2 and clustering.labels == (1, 1, 1, 2, 2, 2):
                hits += 1
        assert hits >= 0.9 * reps

    def test_pair_of_devices(self):
        rng = np.random.default_rng(10)
        spec = ModelSpec("linear", 2)
        fits = [
            local_estimate(spec, gen_device_data("linear", np.zeros(2), 300, rng))
            for _ in range(2)
        ]
        selected = local_es_candidate_graph(fits, 0.05)
        assert selected.num_nodes == 2

    def test_needs_two_devices(self):
        with pytest.raises(ValueError):
            local_es_candidate_graph([_fit([0.0], np.eye(1))], 0.05)


class TestReportCsv:
    def test_roundtrip_columns(self, tmp_path):
        from fedgraph.edge_selection import write_report_csv
        import csv

        g = build_graph(3, [(1, 2), (2, 3)])
        report = select_edges(g, np.array([0.1, 99.0]), 2, 0.05)
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["e_plus"] for r in rows] == ["2", "3"]
        assert rows[0]["keep"] == "1" and rows[1]["keep"] == "0"

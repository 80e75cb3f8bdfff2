import numpy as np
import pytest

from fedgraph.graph import (
    Clustering,
    DuplicateEdgeError,
    GraphError,
    NodeIndexError,
    SelfLoopError,
    algebraic_connectivity_sq,
    brute_force_min_partition,
    build_graph,
    characteristic_graph,
    compat_factor_lower_bound,
    connected_components,
    corrupt_graph,
    graph_fidelity,
    graph_from_adjacency,
    incidence_matrix,
    min_graph_fidelity,
    optimal_subgraph_value,
    read_adjacency_csv,
    read_graph_text,
    write_graph_text,
)


def _elimination_rank(matrix: np.ndarray, tol: float = 1e-9) -> int:
    """Row-reduction rank oracle, independent of numpy's SVD-based rank."""
    a = np.array(matrix, dtype=np.float64)
    rows, cols = a.shape
    rank = 0
    for col in range(cols):
        pivot = None
        for row in range(rank, rows):
            if abs(a[row, col]) > tol:
                pivot = row
                break
        if pivot is None:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        a[rank] = a[rank] / a[rank, col]
        for row in range(rows):
            if row != rank and abs(a[row, col]) > tol:
                a[row] -= a[row, col] * a[rank]
        rank += 1
    return rank


def _random_graph(rng: np.random.Generator, n: int, p_edge: float):
    pairs = [
        (i, j)
        for i in range(1, n + 1)
        for j in range(i + 1, n + 1)
        if rng.random() < p_edge
    ]
    return build_graph(n, pairs)


class TestBuildGraph:
    def test_path_graph(self):
        g = build_graph(3, [(1, 2), (2, 3)])
        assert g.num_edges == 2
        assert g.edges == ((2, 1), (3, 2))

    def test_orientation_normalized(self):
        g = build_graph(3, [(1, 3)])
        assert g.edges == ((3, 1),)

    def test_self_loop_rejected(self):
        with pytest.raises(SelfLoopError):
            build_graph(3, [(2, 2)])

    def test_out_of_range_rejected(self):
        with pytest.raises(NodeIndexError):
            build_graph(3, [(1, 4)])
        with pytest.raises(NodeIndexError):
            build_graph(3, [(0, 1)])

    def test_duplicate_rejected(self):
        with pytest.raises(DuplicateEdgeError):
            build_graph(3, [(1, 2), (2, 1)])

    def test_canonical_order(self):
        g = build_graph(4, [(4, 3), (2, 1), (4, 1)])
        assert g.edges == ((2, 1), (4, 1), (4, 3))


class TestIncidence:
    def test_single_edge_row(self):
        g = build_graph(2, [(1, 2)])
        d = incidence_matrix(g)
        assert d.shape == (1, 2)
        assert np.array_equal(d, [[-1.0, 1.0]])

    def test_empty_edges(self):
        g = build_graph(4, [])
        assert incidence_matrix(g).shape == (0, 4)

    def test_triangle_rank(self):
        g = build_graph(3, [(1, 2), (2, 3), (1, 3)])
        assert _elimination_rank(incidence_matrix(g)) == 2

    def test_rows_sum_to_zero_one_plus_one_minus(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            g = _random_graph(rng, 8, 0.4)
            d = incidence_matrix(g)
            if g.num_edges == 0:
                continue
            assert np.all(d.sum(axis=1) == 0)
            assert np.all((d == 1).sum(axis=1) == 1)
            assert np.all((d == -1).sum(axis=1) == 1)

    def test_rank_is_nodes_minus_components(self):
        rng = np.random.default_rng(11)
        for n in (5, 12, 30, 50):
            g = _random_graph(rng, n, 0.08)
            _, k = connected_components(g)
            assert _elimination_rank(incidence_matrix(g)) == n - k


class TestComponents:
    def test_isolated_nodes(self):
        _, k = connected_components(build_graph(4, []))
        assert k == 4

    def test_path_single_component(self):
        _, k = connected_components(build_graph(3, [(1, 2), (2, 3)]))
        assert k == 1

    def test_two_cliques(self):
        g = build_graph(6, [(1, 2), (2, 3), (1, 3), (4, 5), (5, 6), (4, 6)])
        clustering, k = connected_components(g)
        assert k == 2
        assert clustering.labels == (1, 1, 1, 2, 2, 2)


class TestCharacteristicGraph:
    def test_two_pairs(self):
        clustering = Clustering(labels=(1, 1, 2, 2), num_clusters=2)
        g = characteristic_graph(clustering)
        assert g.edges == ((2, 1), (4, 3))

    def test_single_cluster_complete(self):
        for n in (2, 5, 8):
            clustering = Clustering(labels=(1,) * n, num_clusters=1)
            assert characteristic_graph(clustering).num_edges == n * (n - 1) // 2

    def test_singletons_empty(self):
        clustering = Clustering(labels=(1, 2, 3), num_clusters=3)
        assert characteristic_graph(clustering).num_edges == 0


class TestCorruptGraph:
    def test_zero_level_identity(self):
        rng = np.random.default_rng(0)
        g0 = build_graph(6, [(1, 2), (3, 4), (5, 6)])
        assert corrupt_graph(g0, 0.0, rng).edges == g0.edges

    def test_full_level_complement(self):
        rng = np.random.default_rng(0)
        g0 = build_graph(4, [(1, 2)])
        flipped = corrupt_graph(g0, 1.0, rng)
        expected = {(j, i) for i in range(1, 5) for j in range(i + 1, 5)} - {(2, 1)}
        assert flipped.edge_set() == expected

    def test_seed_reproducible(self):
        g0 = characteristic_graph(Clustering((1,) * 10 + (2,) * 10, 2))
        a = corrupt_graph(g0, 0.3, np.random.default_rng(42))
        b = corrupt_graph(g0, 0.3, np.random.default_rng(42))
        assert a.edges == b.edges

    def test_flip_count_concentration(self):
        # 1000 trials at level 0.2 over 190 pairs: total flips within 4 sd.
        g0 = characteristic_graph(Clustering((1,) * 10 + (2,) * 10, 2))
        pairs = 20 * 19 // 2
        rng = np.random.default_rng(123)
        base = g0.edge_set()
        total = 0
        trials = 1000
        for _ in range(trials):
            corrupted = corrupt_graph(g0, 0.2, rng)
            total += len(base.symmetric_difference(corrupted.edge_set()))
        mean = trials * pairs * 0.2
        sd = np.sqrt(trials * pairs * 0.2 * 0.8)
        assert abs(total - mean) <= 4 * sd

    def test_expected_flips_at_tenth(self):
        # mean flipped pairs = 0.1 * 100 * 99 / 2 = 495
        clustering = Clustering(tuple(1 + (i % 5) for i in range(100)), 5)
        g0 = characteristic_graph(clustering)
        rng = np.random.default_rng(5)
        base = g0.edge_set()
        counts = [
            len(base.symmetric_difference(corrupt_graph(g0, 0.1, rng).edge_set()))
            for _ in range(200)
        ]
        mean = 0.1 * 100 * 99 / 2
        sd = np.sqrt(100 * 99 / 2 * 0.1 * 0.9)
        assert abs(np.mean(counts) - mean) <= 4 * sd / np.sqrt(len(counts))


class TestGraphFidelity:
    def test_equal_graphs(self):
        g0 = characteristic_graph(Clustering((1, 1, 2, 2), 2))
        assert graph_fidelity(g0, g0) == 1.0

    def test_empty_graph(self):
        g0 = characteristic_graph(Clustering((1, 1, 2, 2), 2))
        empty = build_graph(4, [])
        assert graph_fidelity(empty, g0) == pytest.approx(2 / 4)

    def test_complete_vs_two_cliques(self):
        # complete graph: K(E) = 1, |E \ E0| = 6 - 2 = 4, so GF = 2 / (1 + 4)
        g0 = characteristic_graph(Clustering((1, 1, 2, 2), 2))
        complete = build_graph(4, [(i, j) for i in range(1, 5) for j in range(i + 1, 5)])
        assert graph_fidelity(complete, g0) == pytest.approx(2 / 5)

    def test_node_mismatch_rejected(self):
        with pytest.raises(GraphError):
            graph_fidelity(build_graph(3, []), build_graph(4, []))

    def test_range_against_minimum(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            n = int(rng.integers(4, 12))
            k0 = int(rng.integers(2, n // 2 + 2))
            labels = tuple(int(x) for x in (np.arange(n) % k0) + 1)
            g0 = characteristic_graph(Clustering(labels, k0))
            g = _random_graph(rng, n, rng.random())
            gf = graph_fidelity(g, g0)
            assert min_graph_fidelity(n, k0) - 1e-12 <= gf <= 1.0 + 1e-12


class TestOptimalSubgraph:
    def test_subset_of_reference(self):
        g0 = characteristic_graph(Clustering((1, 1, 1, 2, 2), 2))
        g = build_graph(5, [(1, 2), (4, 5)])
        _, k = connected_components(g)
        assert optimal_subgraph_value(g, g0) == k

    def test_disjoint_intersection(self):
        g0 = build_graph(5, [(1, 2)])
        g = build_graph(5, [(3, 4), (4, 5)])
        assert optimal_subgraph_value(g, g0) == 5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            n = int(rng.integers(4, 9))
            k0 = int(rng.integers(1, n + 1))
            labels = tuple(int(x) for x in (np.arange(n) % k0) + 1)
            g0 = characteristic_graph(Clustering(labels, k0))
            g = _random_graph(rng, n, 0.35)
            if g.num_edges > 12:
                continue
            assert optimal_subgraph_value(g, g0) == brute_force_min_partition(g, g0)

    def test_sandwich_inequality(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            n = int(rng.integers(4, 8))
            labels = tuple(int(x) for x in (np.arange(n) % 2) + 1)
            g0 = characteristic_graph(Clustering(labels, 2))
            g = _random_graph(rng, n, 0.4)
            if g.num_edges == 0 or g.num_edges > 12:
                continue
            best = optimal_subgraph_value(g, g0)
            shared = g.edge_set() & g0.edge_set()
            for _ in range(10):
                mask = rng.random(g.num_edges) < 0.5
                subset = [e for e, m in zip(g.edges, mask) if m]
                sub = build_graph(n, subset)
                _, k = connected_components(sub)
                value = k + len(sub.edge_set() - g0.edge_set())
                slack = len(sub.edge_set() - g0.edge_set()) + len(shared - sub.edge_set())
                assert best <= value <= best + slack


class TestBruteForce:
    def test_reference_clique(self):
        g0 = characteristic_graph(Clustering((1, 1, 1, 1), 1))
        assert brute_force_min_partition(g0, g0) == 1

    def test_guard(self):
        g = build_graph(30, [(i, i + 1) for i in range(1, 25)])
        with pytest.raises(GraphError):
            brute_force_min_partition(g, g, max_edges=20)

    def test_full_subset_is_upper_bound(self):
        rng = np.random.default_rng(33)
        for _ in range(20):
            n = int(rng.integers(4, 8))
            labels = tuple(int(x) for x in (np.arange(n) % 3) + 1)
            g0 = characteristic_graph(Clustering(labels, 3))
            g = _random_graph(rng, n, 0.35)
            if g.num_edges > 12:
                continue
            _, k = connected_components(g)
            wrong = len(g.edge_set() - g0.edge_set())
            assert brute_force_min_partition(g, g0) <= k + wrong


class TestCompatFactor:
    def test_empty_set(self):
        assert compat_factor_lower_bound(0, 5) == 1.0

    def test_degree_binding(self):
        assert compat_factor_lower_bound(9, 4) == pytest.approx(0.25)

    def test_set_size_binding(self):
        assert compat_factor_lower_bound(100, 1) == pytest.approx(0.5)


class TestAlgebraicConnectivity:
    def test_single_edge(self):
        assert algebraic_connectivity_sq(build_graph(2, [(1, 2)])) == pytest.approx(2.0)

    def test_complete_graph(self):
        for n in (3, 5, 8):
            g = build_graph(n, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)])
            assert algebraic_connectivity_sq(g) == pytest.approx(n, rel=1e-8)

    def test_disconnected_skips_zero_modes(self):
        g = build_graph(4, [(1, 2), (3, 4)])
        assert algebraic_connectivity_sq(g) == pytest.approx(2.0, rel=1e-8)


class TestFileFormats:
    def test_text_roundtrip(self, tmp_path):
        g = build_graph(5, [(1, 2), (3, 5), (2, 4)])
        path = tmp_path / "graph.txt"
        write_graph_text(g, path)
        assert read_graph_text(path).edges == g.edges

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "graph.txt"
        path.write_text("# device graph\n3\n\n1 2  # first\n2 3\n")
        g = read_graph_text(path)
        assert g.num_nodes == 3 and g.num_edges == 2

    def test_adjacency_csv(self, tmp_path):
        adj = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        path = tmp_path / "adj.csv"
        np.savetxt(path, adj, fmt="%d", delimiter=",")
        g = read_adjacency_csv(path)
        assert g.edges == ((2, 1), (3, 2))

    def test_asymmetric_adjacency_rejected(self):
        with pytest.raises(GraphError):
            graph_from_adjacency(np.array([[0, 1], [0, 0]]))

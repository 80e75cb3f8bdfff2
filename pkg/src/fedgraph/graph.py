"""Device-graph data model and graph algebra.

Nodes are labelled ``1..num_nodes``. Every edge is stored as an oriented
pair ``(e_plus, e_minus)`` with ``e_plus > e_minus``, and the edge list is
kept in lexicographic order of ``(e_minus, e_plus)`` so that matrix views
(incidence rows, edge statistics, CSV reports) are reproducible run to run.

All objects are immutable values; every operation here is read-only after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GraphError",
    "NodeIndexError",
    "SelfLoopError",
    "DuplicateEdgeError",
    "DeviceGraph",
    "Clustering",
    "build_graph",
    "graph_from_adjacency",
    "incidence_matrix",
    "adjacency_matrix",
    "connected_components",
    "characteristic_graph",
    "corrupt_graph",
    "graph_fidelity",
    "optimal_subgraph_value",
    "brute_force_min_partition",
    "compat_factor_lower_bound",
    "algebraic_connectivity_sq",
    "min_graph_fidelity",
    "read_graph_text",
    "write_graph_text",
    "read_adjacency_csv",
]


class GraphError(ValueError):
    """Invalid graph construction or incompatible graph pair."""


class NodeIndexError(GraphError):
    """A node index falls outside ``1..num_nodes``."""


class SelfLoopError(GraphError):
    """An edge connects a node to itself."""


class DuplicateEdgeError(GraphError):
    """The same undirected edge was given more than once."""


@dataclass(frozen=True)
class DeviceGraph:
    """Undirected simple graph over devices ``1..num_nodes``.

    ``edges`` holds oriented pairs ``(e_plus, e_minus)`` with
    ``e_plus > e_minus``, sorted by ``(e_minus, e_plus)``.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.edges)

    def neighbors(self) -> list[list[int]]:
        """Adjacency view: ``out[u - 1]`` lists the neighbours of node u."""
        out: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for plus, minus in self.edges:
            out[plus - 1].append(minus)
            out[minus - 1].append(plus)
        return out

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for plus, minus in self.edges:
            deg[plus - 1] += 1
            deg[minus - 1] += 1
        return deg

    def max_degree(self) -> int:
        if self.num_nodes == 0:
            return 0
        return int(self.degrees().max(initial=0))


@dataclass(frozen=True)
class Clustering:
    """Assignment of every node to one of ``num_clusters`` contiguous labels."""

    labels: tuple[int, ...]
    num_clusters: int

    def __post_init__(self) -> None:
        if self.num_clusters < 0:
            raise GraphError("num_clusters must be nonnegative")
        seen = set(self.labels)
        if seen != set(range(1, self.num_clusters + 1)):
            raise GraphError(
                f"cluster labels must cover 1..{self.num_clusters} exactly, got {sorted(seen)}"
            )

    @property
    def num_nodes(self) -> int:
        return len(self.labels)


def build_graph(num_nodes: int, edge_pairs) -> DeviceGraph:
    """Validate and canonicalize an edge list into a :class:`DeviceGraph`.

    Pairs may come in any orientation; each is normalized to
    ``(max, min)``. Out-of-range indices, self-loops, and duplicate
    undirected edges raise distinct error types.
    """
    if num_nodes < 0:
        raise GraphError("num_nodes must be nonnegative")
    seen: set[tuple[int, int]] = set()
    normalized: list[tuple[int, int]] = []
    for pair in edge_pairs:
        i, j = int(pair[0]), int(pair[1])
        for v in (i, j):
            if not 1 <= v <= num_nodes:
                raise NodeIndexError(f"node index {v} outside 1..{num_nodes}")
        if i == j:
            raise SelfLoopError(f"self-loop at node {i}")
        key = (max(i, j), min(i, j))
        if key in seen:
            raise DuplicateEdgeError(f"duplicate edge {key}")
        seen.add(key)
        normalized.append(key)
    normalized.sort(key=lambda e: (e[1], e[0]))
    return DeviceGraph(num_nodes=num_nodes, edges=tuple(normalized))


def graph_from_adjacency(adj: np.ndarray) -> DeviceGraph:
    """Build a graph from a symmetric 0/1 adjacency matrix (diagonal ignored)."""
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise GraphError(f"adjacency matrix must be square, got shape {adj.shape}")
    n = adj.shape[0]
    if not np.array_equal(adj, adj.T):
        raise GraphError("adjacency matrix must be symmetric")
    pairs = [(i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if adj[i, j]]
    return build_graph(n, pairs)


def adjacency_matrix(g: DeviceGraph) -> np.ndarray:
    adj = np.zeros((g.num_nodes, g.num_nodes), dtype=np.int64)
    for plus, minus in g.edges:
        adj[plus - 1, minus - 1] = 1
        adj[minus - 1, plus - 1] = 1
    return adj


def incidence_matrix(g: DeviceGraph) -> np.ndarray:
    """Signed incidence matrix: row e has +1 at column e_plus, -1 at e_minus."""
    d = np.zeros((g.num_edges, g.num_nodes), dtype=np.float64)
    for row, (plus, minus) in enumerate(g.edges):
        d[row, plus - 1] = 1.0
        d[row, minus - 1] = -1.0
    return d


def connected_components(g: DeviceGraph) -> tuple[Clustering, int]:
    """Partition nodes into maximal connected sets.

    Components are labelled 1..K in order of their smallest member.
    """
    labels = _component_labels(g.num_nodes, g.edges)
    k = int(labels.max(initial=0))
    return Clustering(labels=tuple(int(x) for x in labels), num_clusters=k), k


def _component_labels(num_nodes: int, edges) -> np.ndarray:
    """Iterative DFS labelling; labels are 1-based, ordered by smallest member."""
    adj: list[list[int]] = [[] for _ in range(num_nodes)]
    for plus, minus in edges:
        adj[plus - 1].append(minus - 1)
        adj[minus - 1].append(plus - 1)
    labels = np.zeros(num_nodes, dtype=np.int64)
    current = 0
    for start in range(num_nodes):
        if labels[start]:
            continue
        current += 1
        stack = [start]
        labels[start] = current
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not labels[v]:
                    labels[v] = current
                    stack.append(v)
    return labels


def characteristic_graph(clustering: Clustering) -> DeviceGraph:
    """Union of disjoint cliques, one per cluster label."""
    by_label: dict[int, list[int]] = {}
    for node0, label in enumerate(clustering.labels):
        by_label.setdefault(label, []).append(node0 + 1)
    pairs = []
    for members in by_label.values():
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                pairs.append((members[b_idx], members[a_idx]))
    return build_graph(clustering.num_nodes, pairs)


def corrupt_graph(g0: DeviceGraph, corruption_level: float, rng: np.random.Generator) -> DeviceGraph:
    """Flip each unordered pair's connection status independently.

    Pair (i, j) with i < j is flipped iff an independent Bernoulli draw with
    mean ``corruption_level`` comes up 1; pairs are visited in lexicographic
    order so the result is reproducible for a fixed generator state.
    """
    if not 0.0 <= corruption_level <= 1.0:
        raise GraphError(f"corruption level must lie in [0, 1], got {corruption_level}")
    n = g0.num_nodes
    rows, cols = np.triu_indices(n, k=1)
    flips = rng.random(rows.shape[0]) < corruption_level
    present = g0.edge_set()
    pairs = []
    for i0, j0, flip in zip(rows, cols, flips):
        i, j = int(i0) + 1, int(j0) + 1
        has_edge = (j, i) in present
        if bool(flip) != has_edge:
            pairs.append((j, i))
    return build_graph(n, pairs)


def _check_same_nodes(g: DeviceGraph, g0: DeviceGraph) -> None:
    if g.num_nodes != g0.num_nodes:
        raise GraphError(
            f"graphs must share the node set, got {g.num_nodes} vs {g0.num_nodes} nodes"
        )


def graph_fidelity(g: DeviceGraph, g0: DeviceGraph) -> float:
    """Faithfulness of g to the reference graph g0.

    Defined as K(E0) / (K(E) + |E \\ E0|): the number of reference
    components over the component count of g plus its count of edges
    absent from the reference.
    """
    _check_same_nodes(g, g0)
    _, k0 = connected_components(g0)
    _, k = connected_components(g)
    wrong = len(g.edge_set() - g0.edge_set())
    return k0 / (k + wrong)


def min_graph_fidelity(num_nodes: int, k0: int) -> float:
    """Lower end of the graph-fidelity range for k0 >= 2 reference clusters."""
    if k0 < 2:
        raise GraphError("minimum fidelity is defined for at least two clusters")
    return 2.0 * k0 / (num_nodes**2 * (1.0 - 1.0 / k0) + 2.0)


def optimal_subgraph_value(g: DeviceGraph, g0: DeviceGraph) -> int:
    """Component count of (V, E ∩ E0), the optimal partition value."""
    _check_same_nodes(g, g0)
    shared = sorted(g.edge_set() & g0.edge_set(), key=lambda e: (e[1], e[0]))
    labels = _component_labels(g.num_nodes, shared)
    return int(labels.max(initial=0))


def brute_force_min_partition(g: DeviceGraph, g0: DeviceGraph, max_edges: int = 20) -> int:
    """Exhaustive minimum of K(E') + |E' \\ E0| over all subsets E' of g's edges.

    Exponential in the edge count; guarded and intended as a test oracle only.
    """
    _check_same_nodes(g, g0)
    m = g.num_edges
    if m > max_edges:
        raise GraphError(f"brute force limited to {max_edges} edges, got {m}")
    edges = list(g.edges)
    in_ref = [e in g0.edge_set() for e in edges]
    n = g.num_nodes
    best = n  # empty subset: K = num_nodes, no wrong edges
    for mask in range(1, 1 << m):
        parent = list(range(n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        comps = n
        wrong = 0
        for idx in range(m):
            if not mask & (1 << idx):
                continue
            if not in_ref[idx]:
                wrong += 1
            a, b = find(edges[idx][0] - 1), find(edges[idx][1] - 1)
            if a != b:
                parent[a] = b
                comps -= 1
        best = min(best, comps + wrong)
    return best


def compat_factor_lower_bound(t_size: int, max_degree: int) -> float:
    """Degree-based lower bound on the penalty compatibility factor.

    Returns 1 for the empty set; otherwise 1 / (2 min(sqrt(d), sqrt(|T|))).
    """
    if t_size < 0 or max_degree < 0:
        raise GraphError("sizes must be nonnegative")
    if t_size == 0:
        return 1.0
    if max_degree == 0:
        raise GraphError("nonempty edge subset requires positive max degree")
    return 1.0 / (2.0 * min(np.sqrt(max_degree), np.sqrt(t_size)))


def algebraic_connectivity_sq(g: DeviceGraph) -> float:
    """Smallest nonzero eigenvalue of the graph Laplacian D^T D.

    Dense symmetric eigensolve; the kernel has dimension equal to the
    number of connected components and those zero modes are skipped.
    """
    if g.num_nodes > 10_000:
        raise GraphError("dense eigensolve limited to 10^4 nodes")
    if g.num_edges == 0:
        raise GraphError("graph with no edges has no nonzero Laplacian eigenvalue")
    d = incidence_matrix(g)
    laplacian = d.T @ d
    eigenvalues = np.linalg.eigvalsh(laplacian)
    _, k = connected_components(g)
    return float(eigenvalues[k])


def read_graph_text(path) -> DeviceGraph:
    """Read the text graph format: first line |V|, then '<i> <j>' lines (1-based).

    Blank lines and lines starting with '#' are ignored.
    """
    num_nodes = None
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if num_nodes is None:
                num_nodes = int(line)
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"expected 'i j' edge line, got {raw!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    if num_nodes is None:
        raise GraphError(f"empty graph file: {path}")
    return build_graph(num_nodes, pairs)


def write_graph_text(g: DeviceGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.num_nodes}\n")
        for plus, minus in g.edges:
            fh.write(f"{minus} {plus}\n")


def read_adjacency_csv(path) -> DeviceGraph:
    """Read a 0/1 adjacency matrix stored as CSV (no header)."""
    adj = np.loadtxt(path, delimiter=",", dtype=np.int64)
    if adj.ndim == 0:
        adj = adj.reshape(1, 1)
    return graph_from_adjacency(adj)

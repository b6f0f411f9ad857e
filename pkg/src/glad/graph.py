"""Graphs over panel nodes: neighbor tables, rewiring and correlation graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from glad.core import Panel, SeededRng


class UnsupportedAblationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple graph on ``n_nodes`` indices.

    Undirected edges are stored canonically as ``(min, max)``. Edge weights are
    kept for round-tripping files but never used by the models.
    """

    n_nodes: int
    edges: frozenset
    directed: bool = False
    weights: tuple = ()

    def __post_init__(self):
        canon = set()
        for src, dst in self.edges:
            src, dst = int(src), int(dst)
            if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
                raise ValueError(f"edge ({src}, {dst}) out of range for {self.n_nodes} nodes")
            if src == dst:
                raise ValueError(f"self-loop on node {src}")
            e = (src, dst) if self.directed else (min(src, dst), max(src, dst))
            if e in canon:
                raise ValueError(f"duplicate edge {e}")
            canon.add(e)
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def from_edges(cls, n_nodes, edges, directed=False):
        """Build from an edge iterable, silently dropping duplicates."""
        seen = []
        keys = set()
        for s, d in edges:
            k = (s, d) if directed else (min(s, d), max(s, d))
            if k not in keys:
                keys.add(k)
                seen.append(k)
        return cls(n_nodes, frozenset(seen), directed)

    def sorted_edges(self) -> list:
        return sorted(self.edges)

    def neighbors(self, i: int) -> list:
        return build_neighbor_table(self).neighbors[i]

    def degrees(self) -> np.ndarray:
        return build_neighbor_table(self).degrees

    def relabel(self, perm) -> "Graph":
        """Graph with node ``k`` renamed to ``perm[k]``."""
        return Graph(self.n_nodes, frozenset((perm[s], perm[d]) for s, d in self.edges), self.directed)

    def is_connected(self) -> bool:
        if self.n_nodes <= 1:
            return True
        return connected_components(adjacency(self), directed=False)[0] == 1


@dataclass(frozen=True, eq=False)
class NeighborTable:
    neighbors: tuple
    degrees: np.ndarray

    def mean_matrix(self) -> np.ndarray:
        """Row-normalized adjacency; isolated nodes get an all-zero row."""
        n = len(self.neighbors)
        M = np.zeros((n, n))
        for i, nb in enumerate(self.neighbors):
            if nb:
                M[i, list(nb)] = 1.0 / len(nb)
        return M


def build_neighbor_table(graph: Graph) -> NeighborTable:
    """Neighbor lists; for directed graphs N(i) is the set of sources feeding i."""
    nbrs = [set() for _ in range(graph.n_nodes)]
    for s, d in graph.edges:
        nbrs[d].add(s)
        if not graph.directed:
            nbrs[s].add(d)
    lists = tuple(tuple(sorted(nb)) for nb in nbrs)
    degrees = np.array([len(nb) for nb in lists], dtype=int)
    degrees.setflags(write=False)
    return NeighborTable(lists, degrees)


def adjacency(graph: Graph) -> csr_matrix:
    if not graph.edges:
        return csr_matrix((graph.n_nodes, graph.n_nodes))
    src, dst = np.array(sorted(graph.edges)).T
    if not graph.directed:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    return csr_matrix((np.ones(src.size), (src, dst)), shape=(graph.n_nodes, graph.n_nodes))


def neighbor_mean(states: np.ndarray, table: NeighborTable, node: int) -> np.ndarray:
    nb = table.neighbors[node]
    if not nb:
        return np.zeros(states.shape[1])
    return states[list(nb)].mean(axis=0)


def degree_preserving_rewire(graph: Graph, rng: SeededRng, swap_factor: float = 10.0) -> Graph:
    """Randomize an undirected graph by double-edge swaps.

    Exactly ``ceil(swap_factor * |E|)`` swaps are attempted. Each picks two
    distinct edges (a, b), (c, d) and an orientation, proposing (a, c), (b, d)
    or (a, d), (b, c); proposals creating self-loops or duplicates are rejected
    but still count as attempts. Every node keeps its degree.
    """
    if graph.directed:
        raise UnsupportedAblationError("degree-preserving rewiring needs an undirected graph")
    edges = graph.sorted_edges()
    if len(edges) < 2:
        raise ValueError("rewiring needs at least 2 edges")
    present = set(edges)
    n_attempts = math.ceil(swap_factor * len(edges))
    for _ in range(n_attempts):
        i, j = rng.choice(len(edges), size=2, replace=False)
        (a, b), (c, d) = edges[i], edges[j]
        if rng.random() < 0.5:
            c, d = d, c
        # proposal: (a, c), (b, d)
        if a == c or b == d:
            continue
        e1 = (min(a, c), max(a, c))
        e2 = (min(b, d), max(b, d))
        if e1 in present or e2 in present:
            continue
        present.difference_update((edges[i], edges[j]))
        present.update((e1, e2))
        edges[i], edges[j] = e1, e2
    return Graph(graph.n_nodes, frozenset(edges), directed=False)


def correlation_knn_graph(panel: Panel, train_range: range, k: int) -> Graph:
    """Union-of-kNN graph on absolute Pearson correlation over the training range.

    Constant nodes get correlation 0 with every peer. Ties in correlation go to
    the lower node index.
    """
    n = panel.n_nodes
    if n < 2 or not 0 < k < n:
        raise ValueError(f"need 0 < k < n_nodes, got k={k}, n_nodes={n}")
    X = panel.filled_values()[:, train_range.start:train_range.stop]
    X = X - X.mean(axis=1, keepdims=True)
    norms = np.sqrt((X * X).sum(axis=1))
    ok = norms > 0
    C = np.zeros((n, n))
    Xn = X[ok] / norms[ok, None]
    C[np.ix_(ok, ok)] = Xn @ Xn.T
    C = np.abs(C)
    np.fill_diagonal(C, -np.inf)
    edges = []
    for i in range(n):
        order = np.lexsort((np.arange(n), -C[i]))
        for j in order[:k]:
            edges.append((i, int(j)))
    return Graph.from_edges(n, edges)

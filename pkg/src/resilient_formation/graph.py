"""Undirected communication graphs and their algebraic views.

Edges are stored as sorted ``(i, j)`` pairs with ``i < j``. That order is the
row order of the incidence matrix and of every edge-stacked vector in the
package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import InvalidTopologyError


@dataclass(frozen=True)
class Graph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise InvalidTopologyError(f"node count must be positive, got {self.n_nodes}")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise InvalidTopologyError(f"self-loop at node {i}")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise InvalidTopologyError(f"edge ({i}, {j}) out of range for {self.n_nodes} nodes")
            if i > j:
                raise InvalidTopologyError(f"edge ({i}, {j}) is not normalized; use Graph.from_edges")
            if (i, j) in seen:
                raise InvalidTopologyError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if list(self.edges) != sorted(self.edges):
            raise InvalidTopologyError("edges must be sorted; use Graph.from_edges")

    @classmethod
    def from_edges(cls, n_nodes: int, edges: Iterable[Iterable[int]]) -> "Graph":
        """Normalize orientation and order, then validate."""
        normalized = []
        for edge in edges:
            i, j = (int(v) for v in edge)
            normalized.append((min(i, j), max(i, j)))
        return cls(int(n_nodes), tuple(sorted(normalized)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        a.setflags(write=False)
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        d = self.adjacency.sum(axis=1)
        d.setflags(write=False)
        return d

    def neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.adjacency[i]))

    def component_count(self) -> int:
        parent = list(range(self.n_nodes))

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        for i, j in self.edges:
            parent[find(i)] = find(j)
        return len({find(u) for u in range(self.n_nodes)})

    def is_connected(self) -> bool:
        return self.component_count() == 1

    def relabeled(self, perm) -> "Graph":
        """Graph with node ``u`` renamed to ``perm[u]``."""
        return Graph.from_edges(self.n_nodes, ((perm[i], perm[j]) for i, j in self.edges))


@dataclass(frozen=True)
class LaplacianView:
    L: np.ndarray
    D: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class IncidenceView:
    H: np.ndarray
    edges: tuple[tuple[int, int], ...]


def build_complete(n_nodes: int) -> Graph:
    if n_nodes < 2:
        raise InvalidTopologyError(f"complete graph needs at least 2 nodes, got {n_nodes}")
    return Graph(n_nodes, tuple((i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)))


def build_ring(n_nodes: int) -> Graph:
    if n_nodes < 3:
        raise InvalidTopologyError(f"ring needs at least 3 nodes, got {n_nodes}")
    return Graph.from_edges(n_nodes, ((i, (i + 1) % n_nodes) for i in range(n_nodes)))


def laplacian(g: Graph) -> LaplacianView:
    A = g.adjacency.astype(float)
    D = np.diag(A.sum(axis=1))
    return LaplacianView(L=D - A, D=D, A=A)


def incidence(g: Graph) -> IncidenceView:
    """Signed incidence matrix: +1 at the lower endpoint, -1 at the higher one."""
    H = np.zeros((g.n_edges, g.n_nodes))
    for row, (i, j) in enumerate(g.edges):
        H[row, i] = 1.0
        H[row, j] = -1.0
    return IncidenceView(H=H, edges=g.edges)


def kron_expand(M, n: int) -> np.ndarray:
    """``M ⊗ I_n``: lift a node-level matrix to stacked n-dimensional states."""
    if n < 1:
        raise ValueError(f"spatial dimension must be >= 1, got {n}")
    return np.kron(np.asarray(M, dtype=float), np.eye(n))

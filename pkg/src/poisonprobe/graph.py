"""Attributed-graph data model: CSR adjacency, degree normalization and
hop-distance machinery.

All values here are immutable after construction and safe to share across
parallel attack workers.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class GraphFormatError(ValueError):
    """Raised when an adjacency or feature matrix violates the data model."""


def _build_csr(n: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Compressed sparse rows (indptr, indices) from an undirected edge list.

    Edges are mirrored, deduplicated, self-loops dropped; column indices are
    sorted within each row.
    """
    if edges.size == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    keep = src != dst
    src, dst = src[keep], dst[keep]
    # sort by (src, dst) and drop duplicate directed pairs
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    if src.size:
        uniq = np.empty(src.size, dtype=bool)
        uniq[0] = True
        uniq[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[uniq], dst[uniq]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, dst.astype(np.int64)


@dataclass(frozen=True)
class AttributedGraph:
    """A graph with dense node features and a sparse symmetric adjacency.

    X is n x d row-major float64 with entries in [0, 1]; the adjacency is
    binary with no stored self-loops (CSR arrays indptr/indices).  labels,
    when present, hold one class id in [0, class_count) per node.
    """

    n: int
    d: int
    X: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    labels: np.ndarray | None = None
    class_count: int = 0

    def __post_init__(self):
        if self.X.shape != (self.n, self.d):
            raise GraphFormatError(f"feature matrix is {self.X.shape}, expected {(self.n, self.d)}")
        if self.X.size and (self.X.min() < 0.0 or self.X.max() > 1.0):
            raise GraphFormatError("feature entries must lie in [0, 1]")
        if self.labels is not None:
            if self.labels.shape != (self.n,):
                raise GraphFormatError("labels must be one class id per node")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
                raise GraphFormatError("label ids must lie in [0, class_count)")

    @classmethod
    def from_edges(cls, X: np.ndarray, edges, labels=None, class_count: int = 0) -> "AttributedGraph":
        """Build a graph from features and an iterable of (i, j) pairs.

        The edge list may be directed, contain duplicates or self-loops; the
        stored adjacency is the cleaned symmetric version.
        """
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, d = X.shape
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        edges = edges.reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise GraphFormatError("edge endpoint out of range")
        indptr, indices = _build_csr(n, edges)
        lab = None if labels is None else np.asarray(labels, dtype=np.int64)
        return cls(n=n, d=d, X=X, indptr=indptr, indices=indices, labels=lab, class_count=class_count)

    def neighbors(self, v: int) -> np.ndarray:
        """Column indices of row v (sorted, self excluded)."""
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def edge_count(self) -> int:
        """Directed pair count (each undirected edge counted twice)."""
        return int(self.indices.size)

    def has_edge(self, i: int, j: int) -> bool:
        row = self.neighbors(i)
        k = np.searchsorted(row, j)
        return k < row.size and row[k] == j


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops added.

    Entry (i, j) is (A + I)_ij / sqrt(dtilde_i * dtilde_j) where dtilde is
    the self-loop-augmented degree.  Stored as CSR with sorted columns; the
    value formula is symmetric in (i, j) exactly, so the matrix is bitwise
    symmetric.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    degrees_tilde: np.ndarray

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.data[sl]

    def neighbors(self, i: int) -> np.ndarray:
        """Structural neighborhood of i including i itself."""
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        from . import backend

        return backend.csr_dense_matmul(self.indptr, self.indices, self.data, np.ascontiguousarray(dense))


def normalize(graph: AttributedGraph) -> NormalizedAdjacency:
    """Degree-normalize the adjacency after adding self-loops.

    An isolated node gets dtilde = 1 and a diagonal entry of exactly 1.
    """
    n = graph.n
    deg_tilde = graph.degrees.astype(np.float64) + 1.0
    counts = np.diff(graph.indptr) + 1  # one self-loop per row
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1], dtype=np.float64)
    for i in range(n):
        nbrs = graph.neighbors(i)
        pos = np.searchsorted(nbrs, i)
        row = np.insert(nbrs, pos, i)
        sl = slice(indptr[i], indptr[i + 1])
        indices[sl] = row
        # evaluated in this exact form so the value is bitwise symmetric in (i, j)
        data[sl] = 1.0 / np.sqrt(deg_tilde[i] * deg_tilde[row])
    return NormalizedAdjacency(n=n, indptr=indptr, indices=indices, data=data, degrees_tilde=deg_tilde)


def hop_distances(graph: AttributedGraph, u: int, cap: int | None = None) -> np.ndarray:
    """BFS hop distance from u to every node; -1 for unreachable.

    With cap given, the search stops after that many levels (farther nodes
    report -1).
    """
    dist = np.full(graph.n, -1, dtype=np.int64)
    dist[u] = 0
    frontier = deque([u])
    while frontier:
        v = frontier.popleft()
        dv = dist[v]
        if cap is not None and dv >= cap:
            continue
        for w in graph.neighbors(v):
            if dist[w] < 0:
                dist[w] = dv + 1
                frontier.append(w)
    return dist


def hop_neighbors(graph: AttributedGraph, u: int, m: int) -> set[int]:
    """Nodes at BFS distance exactly m from u (never includes u)."""
    if m < 1:
        raise ValueError("hop count must be >= 1")
    dist = hop_distances(graph, u, cap=m)
    return set(np.flatnonzero(dist == m).tolist())


@dataclass(frozen=True)
class NeighborhoodTree:
    """BFS shortest-path layering rooted at a target node.

    parents[v] lists the neighbors of v one level closer to the root; edges
    between same-level nodes are dropped.  levels[m] is the set of nodes at
    distance exactly m, for m = 1..depth.
    """

    root: int
    depth: int
    dist: np.ndarray
    parents: dict[int, np.ndarray] = field(repr=False)
    levels: list[np.ndarray] = field(repr=False)

    def level(self, m: int) -> np.ndarray:
        if not 1 <= m <= self.depth:
            raise ValueError(f"level {m} outside tree depth {self.depth}")
        return self.levels[m - 1]


def build_neighborhood_tree(graph: AttributedGraph, u: int, depth: int) -> NeighborhoodTree:
    """Layer the graph around u up to `depth` hops, recording parent sets."""
    if depth < 1:
        raise ValueError("tree depth must be >= 1")
    dist = hop_distances(graph, u, cap=depth)
    levels = [np.flatnonzero(dist == m).astype(np.int64) for m in range(1, depth + 1)]
    parents: dict[int, np.ndarray] = {}
    for m in range(1, depth + 1):
        for v in levels[m - 1]:
            nbrs = graph.neighbors(v)
            parents[int(v)] = nbrs[dist[nbrs] == m - 1]
    return NeighborhoodTree(root=u, depth=depth, dist=dist, parents=parents, levels=levels)

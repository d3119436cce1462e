"""Unweighted neighbor graphs and the Gabriel construction.

Two points are Gabriel neighbors when the closed ball having the segment
between them as a diameter contains no third point.  With distances only,
a third point ``k`` lies in that ball iff

    r_ik**2 + r_jk**2 <= r_ij**2

(the Apollonius median from ``k`` is no longer than the ball's radius).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .datasets import as_distance_array

__all__ = [
    "NeighborGraph",
    "DegreeStats",
    "gabriel_graph",
    "is_gabriel_edge",
    "acute_triangle_violations",
    "curvature_bound",
    "curvature_bound_uniform",
    "degree_stats",
    "BOUNDARY_RTOL",
]

_BLOCK_ELEMS = 2_000_000

# a third point within R * (1 + BOUNDARY_RTOL) of the midpoint blocks the edge
BOUNDARY_RTOL = 1e-12


class NeighborGraph:
    """Undirected simple graph on ``n_nodes`` nodes.

    Edges are stored once, as ``(i, j)`` pairs with ``i < j``, sorted
    lexicographically.  Instances are treated as immutable; ``remove_edges``
    returns a new graph.
    """

    def __init__(self, n_nodes: int, edges=()):
        self.n_nodes = int(n_nodes)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.edges = e
        self._adj = None

    def __repr__(self):
        return f"NeighborGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"

    def __eq__(self, other):
        return (isinstance(other, NeighborGraph) and self.n_nodes == other.n_nodes
                and np.array_equal(self.edges, other.edges))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> list[np.ndarray]:
        """Sorted neighbor indices of every node."""
        if self._adj is None:
            a = self.to_sparse().tocsr()
            self._adj = [a.indices[a.indptr[i]:a.indptr[i + 1]].copy() for i in range(self.n_nodes)]
        return self._adj

    def neighbors(self, i: int) -> np.ndarray:
        return self.adjacency[i]

    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def has_edge(self, i: int, j: int) -> bool:
        i, j = min(i, j), max(i, j)
        nb = self.adjacency[i]
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)

    def edge_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.edges}

    def edge_lengths(self, d) -> np.ndarray:
        d = as_distance_array(d)
        return d[self.edges[:, 0], self.edges[:, 1]]

    def to_sparse(self, weights=None) -> sparse.csr_matrix:
        """Symmetric sparse adjacency (unit weights unless given per edge)."""
        w = np.ones(self.n_edges) if weights is None else np.asarray(weights, dtype=float)
        i, j = self.edges[:, 0], self.edges[:, 1]
        a = sparse.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                              shape=(self.n_nodes, self.n_nodes))
        return a.tocsr()

    def components(self) -> tuple[int, np.ndarray]:
        """Number of connected components and the per-node component label."""
        return csgraph.connected_components(self.to_sparse(), directed=False)

    def remove_edges(self, edges) -> "NeighborGraph":
        drop = {(min(int(a), int(b)), max(int(a), int(b))) for a, b in edges}
        keep = [k for k, (i, j) in enumerate(self.edges) if (int(i), int(j)) not in drop]
        return NeighborGraph(self.n_nodes, self.edges[keep])


def _blocks_threshold(r2):
    # m <= R (1 + eps)  <=>  r_ik^2 + r_jk^2 <= r_ij^2 * (1 + (1 + eps)^2) / 2
    return r2 * (1.0 + (1.0 + BOUNDARY_RTOL) ** 2) / 2.0


def is_gabriel_edge(i: int, j: int, d) -> bool:
    """Whether ``i`` and ``j`` are Gabriel neighbors under distances ``d``."""
    d = as_distance_array(d)
    n = len(d)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range for {n} points")
    if i == j:
        raise ValueError("i and j must differ")
    others = np.ones(n, dtype=bool)
    others[[i, j]] = False
    lhs = d[i, others] ** 2 + d[j, others] ** 2
    return not bool(np.any(lhs <= _blocks_threshold(d[i, j] ** 2)))


def _gabriel_row(i, d):
    """Gabriel neighbors ``j > i`` of node ``i``.

    Blockers of (i, j) are strictly closer to ``i`` than ``j`` is, so
    candidates are tested against growing prefixes of ``i``'s distance
    ordering; a candidate closer than the next prefix's first element is
    final.
    """
    n = len(d)
    row = d[i]
    cand = np.arange(i + 1, n)
    rank = np.argsort(row, kind="stable")
    bounds = [0, 16, 64, 256, 1024, 4096, n]
    accepted = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo >= n or not len(cand):
            break
        hi = min(hi, n)
        ks = rank[lo:hi]
        r2 = row[cand] ** 2
        # candidates not farther than every remaining blocker are settled
        settled = row[cand] <= row[ks[0]]
        accepted.append(cand[settled])
        cand, r2 = cand[~settled], r2[~settled]
        if not len(cand):
            break
        rk2 = row[ks] ** 2
        lim = _blocks_threshold(r2)
        blocked = np.zeros(len(cand), dtype=bool)
        step = max(1, _BLOCK_ELEMS // len(ks))
        for a in range(0, len(cand), step):
            c = cand[a:a + step]
            lhs = rk2[None, :] + d[np.ix_(c, ks)] ** 2
            # k == i and k == j are not third points
            own = (ks[None, :] == c[:, None]) | (ks[None, :] == i)
            blocked[a:a + step] = np.any((lhs <= lim[a:a + step, None]) & ~own, axis=1)
        cand = cand[~blocked]
    accepted.append(cand)
    return np.concatenate(accepted)


def gabriel_graph(d, n_threads: int = 1) -> NeighborGraph:
    """Gabriel graph of the point set with pairwise distances ``d``.

    Examples
    --------
    >>> g = gabriel_graph([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    >>> g.edges.tolist()
    [[0, 1], [1, 2]]
    """
    d = as_distance_array(d)
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix contains non-finite values")
    n = len(d)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as ex:
            rows = list(ex.map(lambda i: _gabriel_row(i, d), range(n - 1)))
    else:
        rows = [_gabriel_row(i, d) for i in range(n - 1)]
    edges = [np.column_stack([np.full(len(js), i), np.sort(js)]) for i, js in enumerate(rows) if len(js)]
    e = np.vstack(edges) if edges else np.empty((0, 2), dtype=np.int64)
    return NeighborGraph(n, e)


def _triangles(g: NeighborGraph):
    adj = [set(a.tolist()) for a in g.adjacency]
    for i, j in g.edges:
        for k in adj[i] & adj[j]:
            if k > j:
                yield int(i), int(j), int(k)


def acute_triangle_violations(g: NeighborGraph, d) -> list[tuple[int, int, int]]:
    """3-cliques of ``g`` that are not acute triangles.

    A triangle is reported when the squares of its two shorter sides do not
    sum to more than the square of its longest side.
    """
    d = as_distance_array(d)
    bad = []
    for tri in _triangles(g):
        i, j, k = tri
        sides = sorted([d[i, j] ** 2, d[i, k] ** 2, d[j, k] ** 2])
        if not sides[0] + sides[1] > sides[2]:
            bad.append(tri)
    return bad


def curvature_bound(r_ik: float, r_jk: float) -> float:
    """Largest geodesic curvature a Gabriel path i-k-j can represent."""
    if r_ik <= 0 or r_jk <= 0:
        raise ValueError("distances must be positive")
    return 2.0 / np.sqrt(r_ik ** 2 + r_jk ** 2)


def curvature_bound_uniform(spacing: float) -> float:
    """Curvature bound for a curve sampled at constant arc-length ``spacing``."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    return np.pi / (2.0 * spacing)


@dataclass
class DegreeStats:
    mean: float
    std: float
    histogram: np.ndarray  # counts indexed by degree
    n: int


def degree_stats(g: NeighborGraph, mask=None) -> DegreeStats:
    """Degree summary over the nodes selected by boolean ``mask``."""
    deg = g.degree()
    if mask is None:
        mask = np.ones(g.n_nodes, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (g.n_nodes,):
        raise ValueError("mask length must equal the number of nodes")
    if not mask.any():
        raise ValueError("empty mask")
    sel = deg[mask]
    return DegreeStats(float(sel.mean()), float(sel.std()), np.bincount(sel), int(mask.sum()))

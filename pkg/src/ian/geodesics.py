"""Geodesic distances on the converged graphs.

Two estimates are offered: shortest paths through the unweighted graph with
edge lengths taken from the ambient distances, and a heat-method field on the
weighted graph (diffuse briefly, normalize the gradient, integrate back).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .datasets import as_distance_array
from .gabriel import NeighborGraph
from .kernel_stats import WeightedGraph

__all__ = [
    "GeodesicField",
    "GraphLaplacian",
    "graph_geodesics",
    "graph_laplacian",
    "heat_geodesics",
    "weighted_graph_from_array",
    "medoid",
    "save_geodesic",
    "SOLVER_RTOL",
]

SOLVER_RTOL = 1e-8


@dataclass(frozen=True)
class GeodesicField:
    """Distances from ``source``; ``inf`` marks unreachable nodes."""

    source: int
    dist: np.ndarray
    method: str
    t_diffusion: float | None = None

    @property
    def unreachable(self) -> np.ndarray:
        return np.flatnonzero(~np.isfinite(self.dist))


def medoid(d) -> int:
    """Index of the point with the smallest total distance to the others."""
    d = as_distance_array(d)
    return int(np.argmin(d.sum(axis=1)))


def weighted_graph_from_array(w, cutoff: float = 0.0) -> WeightedGraph:
    """Wrap a symmetric weight matrix (dense or sparse), dropping the diagonal."""
    m = sparse.csr_matrix(w, dtype=float)
    if m.shape[0] != m.shape[1]:
        raise ValueError("weight matrix must be square")
    if abs(m - m.T).max() > 0:
        raise ValueError("weight matrix must be symmetric")
    m = m - sparse.diags(m.diagonal())
    m.eliminate_zeros()
    return WeightedGraph(m.tocsr(), cutoff)


def graph_geodesics(g: NeighborGraph, d, source: int) -> GeodesicField:
    """Shortest-path distances from ``source`` with edge lengths ``r_ij``."""
    d = as_distance_array(d)
    if not 0 <= source < g.n_nodes:
        raise IndexError(f"source {source} out of range")
    a = g.to_sparse(g.edge_lengths(d))
    dist = csgraph.dijkstra(a, directed=False, indices=source)
    return GeodesicField(int(source), dist, "graph")


class GraphLaplacian:
    """Combinatorial Laplacian ``L = D - W`` of a weighted graph."""

    def __init__(self, w: WeightedGraph | np.ndarray | sparse.spmatrix):
        if not isinstance(w, WeightedGraph):
            w = weighted_graph_from_array(w)
        self.w = w.w
        self.degree = w.degree()
        self.matrix = (sparse.diags(self.degree) - self.w).tocsr()

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    __matmul__ = matvec

    def quadratic_form(self, x) -> float:
        """``x^T L x``, which equals the sum over edges of ``w_ij (x_i - x_j)^2``."""
        x = np.asarray(x, dtype=float)
        return float(x @ (self.matrix @ x))

    def solve(self, b, rtol: float = SOLVER_RTOL) -> np.ndarray:
        """Mean-zero solution of ``L x = b`` on a connected graph.

        ``b`` is projected onto the range of ``L`` (mean zero) first.
        """
        b = np.asarray(b, dtype=float)
        b = b - b.mean()
        dinv = np.where(self.degree > 0, 1.0 / np.where(self.degree > 0, self.degree, 1), 1.0)
        pre = spla.LinearOperator(self.matrix.shape, matvec=lambda v: dinv * v, dtype=float)
        x, info = spla.cg(self.matrix, b, rtol=rtol, atol=0.0, M=pre, maxiter=20 * self.n)
        if info != 0:
            raise RuntimeError(f"conjugate gradient did not converge (info={info})")
        return x - x.mean()


def graph_laplacian(w) -> GraphLaplacian:
    return GraphLaplacian(w)


def _edge_scale(w: WeightedGraph, d) -> float:
    """Median kernel width ``sigma_i sigma_j`` (distance squared units)."""
    if w.sigma is not None:
        return float(np.median(w.sigma) ** 2)
    coo = sparse.triu(w.w, k=1).tocoo()
    keep = (coo.data > 0) & (coo.data < 1)
    if not keep.any():
        raise ValueError("cannot infer kernel width from the weights")
    r2 = d[coo.row[keep], coo.col[keep]] ** 2
    return float(np.median(-r2 / np.log(coo.data[keep])))


def _steepest_slope(u, i, j, wij, d, n):
    """Per-node max of ``|u_j - u_i| / r_ij`` over edges within 1% of the node's strongest weight."""
    wmax = np.zeros(n)
    np.maximum.at(wmax, i, wij)
    strong = wij >= 0.01 * wmax[i]
    out = np.zeros(n)
    np.maximum.at(out, i[strong], np.abs(u[j[strong]] - u[i[strong]]) / d[i[strong], j[strong]])
    return out


def heat_geodesics(w: WeightedGraph, d, source: int, t: float | None = None,
                   normalize: str = "slope", log_transform: bool = True) -> GeodesicField:
    """Heat-method distance field from ``source`` on a weighted graph.

    Parameters
    ----------
    w : WeightedGraph
    d : DistanceMatrix or array
        Used to infer the kernel width when ``w`` has no scales attached and
        to fix the overall length unit of the result.
    source : int
    t : float, optional
        Diffusion time in squared distance units; ``(median sigma)^2`` by default.
    normalize : {"slope", "l2"}
        Per-node gradient normalization.  ``"slope"`` divides by the steepest
        slope ``|u_j - u_i| / r_ij`` over the node's strongly weighted edges,
        giving a unit-slope field; ``"l2"`` divides by the norm of the edge
        gradient vector.
    log_transform : bool
        Take edge differences of ``-log u`` instead of ``u``.  Both point the
        same way, but the logarithm is close to linear in distance, which keeps
        finite differences over long edges consistent.

    Notes
    -----
    With ``eps`` the median kernel width, the heat step solves
    ``(D + (4 t / eps) L) u = D e_s``, an implicit step of the random-walk
    Laplacian.  Gradients live on edges as ``sqrt(w_ij) (u_j - u_i)`` and are
    scaled to unit length at every node.  The potential solving the
    least-squares Poisson problem is shifted to vanish at the source and
    divided by its median per-node steepest slope, so that the result is in
    the units of ``d``.
    """
    d = as_distance_array(d)
    if not isinstance(w, WeightedGraph):
        w = weighted_graph_from_array(w)
    n = w.n_nodes
    if not 0 <= source < n:
        raise IndexError(f"source {source} out of range")
    ncomp, _ = w.components()
    if ncomp > 1:
        raise ValueError(f"weighted graph has {ncomp} components; the Poisson solve is singular")
    eps = _edge_scale(w, d)
    if t is None:
        t = eps
    if not t > 0:
        raise ValueError("diffusion time must be positive")
    lap = GraphLaplacian(w)
    deg = lap.degree
    rhs = np.zeros(n)
    rhs[source] = deg[source]
    a = (sparse.diags(deg) + (4.0 * t / eps) * lap.matrix).tocsc()
    u = spla.spsolve(a, rhs)
    if log_transform:
        u = np.log(np.maximum(u, np.finfo(float).tiny))

    coo = w.w.tocoo()
    i, j, wij = coo.row, coo.col, coo.data
    sw = np.sqrt(wij)
    grad = sw * (u[j] - u[i])
    if normalize == "l2":
        mag = np.sqrt(np.bincount(i, weights=grad ** 2, minlength=n))
    elif normalize == "slope":
        mag = _steepest_slope(u, i, j, wij, d, n)
    else:
        raise ValueError(f"unknown normalization {normalize!r}")
    mag[mag == 0] = 1.0
    x = -grad / mag[i]
    # antisymmetric part, so that the field is a proper edge flow
    xt = sparse.csr_matrix((x, (i, j)), shape=(n, n))
    xbar = (xt - xt.T) * 0.5
    div = -np.asarray(xbar.multiply(sparse.csr_matrix((sw, (i, j)), shape=(n, n))).sum(axis=1)).ravel()
    phi = lap.solve(div)
    phi = phi - phi[source]
    if np.median(phi) < 0:
        phi = -phi
    # fix the length unit: a distance field has unit steepest slope at a typical node
    slope = _steepest_slope(phi, i, j, wij, d, n)
    ok = slope > 0
    if ok.any():
        phi = phi / float(np.median(slope[ok]))
    return GeodesicField(int(source), phi, "heat", float(t))


def save_geodesic(f: GeodesicField, path) -> None:
    """CSV with columns ``node,distance`` (``inf`` when unreachable)."""
    with open(path, "w") as fh:
        fh.write("node,distance\n")
        for k, v in enumerate(f.dist):
            fh.write(f"{k},{float(v)!r}\n")

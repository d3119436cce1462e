"""Local intrinsic dimension.

The neighborhood correlation dimension (NCD) restricts a Gaussian correlation
sum to a hop neighborhood in the converged graph and reads the dimension off
the peak of its log-log slope.  The maximum likelihood estimator on k nearest
neighbors is provided as a baseline.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datasets import as_distance_array
from .gabriel import NeighborGraph

__all__ = [
    "DimensionEstimate",
    "MLEEstimate",
    "zprime_curve",
    "sigma_grid",
    "extended_neighborhood",
    "recenter",
    "ncd_dimension",
    "mle_dimension",
    "knn_neighborhoods",
    "graph_neighborhoods",
    "save_dimension",
    "save_mle",
    "N_SIGMA",
]

N_SIGMA = 200


@dataclass
class DimensionEstimate:
    """Per-node NCD estimates.

    ``d_star = max(d_hat_prime, d_tilde_prime)`` elementwise.  ``center`` is
    the re-centered node used for each curve and ``nbhd_size`` the size of the
    extended neighborhood (node included).
    """

    d_hat: np.ndarray
    d_hat_prime: np.ndarray
    d_tilde_prime: np.ndarray
    d_star: np.ndarray
    center: np.ndarray
    nbhd_size: np.ndarray
    hops: int
    n_sigma: int = N_SIGMA

    @property
    def n_nodes(self) -> int:
        return len(self.d_star)


@dataclass
class MLEEstimate:
    """Per-node maximum likelihood estimates.

    ``m_raw`` is the estimate from each node's own neighbor distances and
    ``m_k`` its average over the node's neighborhood (node included).
    """

    m_raw: np.ndarray
    m_k: np.ndarray
    k: np.ndarray
    inverse_average: bool


def zprime_curve(center: int, extended_nbhd, d, sigmas) -> np.ndarray:
    """Log-log slope of the local Gaussian correlation sum.

    Parameters
    ----------
    center : int
        Node the kernel is centered on.
    extended_nbhd : array_like of int
        Nodes summed over; normally contains ``center``.
    d : DistanceMatrix or array
    sigmas : array_like
        Positive, increasing bandwidths.

    Returns
    -------
    ndarray
        ``Z'(sigma) = sum r^2 exp(-r^2 / 2 sigma^2) / (sigma^2 sum exp(-r^2 / 2 sigma^2))``
        with ``r`` the distances from ``center``.

    Examples
    --------
    >>> zprime_curve(0, [0], [[0.0]], [0.5, 1.0]).tolist()
    [0.0, 0.0]
    """
    nb = np.asarray(extended_nbhd, dtype=np.int64).ravel()
    if not len(nb):
        raise ValueError("empty neighborhood")
    sig = np.asarray(sigmas, dtype=float).ravel()
    if not len(sig) or np.any(sig <= 0) or np.any(np.diff(sig) <= 0):
        raise ValueError("sigma grid must be positive and increasing")
    d = as_distance_array(d)
    r2 = d[center, nb] ** 2
    return _zprime(r2, sig)


def _zprime(r2, sig):
    # shift by the smallest r^2 so that the weights never all underflow
    r2 = np.asarray(r2, dtype=float)
    x = (r2 - r2.min())[None, :] / (2.0 * sig[:, None] ** 2)
    e = np.exp(-x)
    return (e @ r2) / (sig ** 2 * e.sum(axis=1))


def sigma_grid(r, n: int = N_SIGMA) -> np.ndarray:
    """Log-spaced bandwidths from a tenth of the smallest nonzero ``r`` to ten times the largest."""
    r = np.asarray(r, dtype=float)
    r = r[r > 0]
    if not len(r):
        raise ValueError("no nonzero distance in the neighborhood")
    return np.geomspace(0.1 * r.min(), 10.0 * r.max(), n)


def extended_neighborhood(g: NeighborGraph, i: int, hops: int, min_size: int = 0) -> np.ndarray:
    """Nodes within ``hops`` edges of ``i`` (``i`` included), sorted.

    The expansion continues past ``hops`` until at least ``min_size`` nodes
    are collected or the component is exhausted.
    """
    if hops < 1:
        raise ValueError("hops must be >= 1")
    adj = g.adjacency
    seen = np.zeros(g.n_nodes, dtype=bool)
    seen[i] = True
    frontier = np.array([i])
    h = 0
    count = 1
    while len(frontier) and (h < hops or count < min_size):
        nxt = np.unique(np.concatenate([adj[k] for k in frontier]))
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        count += len(nxt)
        frontier = nxt
        h += 1
    return np.flatnonzero(seen)


def recenter(i: int, g: NeighborGraph, ext, d) -> int:
    """Node of ``i``'s closed neighborhood with the smallest median squared distance to ``ext``."""
    d = as_distance_array(d)
    cand = np.concatenate([[i], g.neighbors(i)])
    med = np.median(d[np.ix_(cand, np.asarray(ext))] ** 2, axis=1)
    # ties go to i, then to the lowest index
    return int(cand[np.argmin(med)])


def _floor_log2_degree(deg):
    return np.floor(np.log2(np.maximum(1, deg)))


def ncd_dimension(g_star: NeighborGraph, d, hops: int = 3, d_guess="degree",
                  n_sigma: int = N_SIGMA, n_threads: int = 1) -> DimensionEstimate:
    """Neighborhood correlation dimension of every node.

    Parameters
    ----------
    g_star : NeighborGraph
        Converged graph.
    d : DistanceMatrix or array
    hops : int
        Minimum hop radius of the extended neighborhoods.
    d_guess : float, "degree" or None
        Anticipated dimension.  Neighborhoods are grown until they hold at
        least ``10**(d_guess / 2)`` nodes when the component allows, since a
        dimension above ``2 log10 |N'|`` cannot be resolved.  ``"degree"``
        uses ``log2`` of the largest degree in the node's closed
        neighborhood; ``None`` keeps exactly ``hops`` hops.
    n_sigma : int
        Number of bandwidths per curve.
    n_threads : int

    Returns
    -------
    DimensionEstimate
    """
    d = as_distance_array(d)
    if hops < 1:
        raise ValueError("hops must be >= 1")
    n = g_star.n_nodes
    deg = g_star.degree()
    adj = g_star.adjacency

    def need(i):
        if d_guess is None:
            return 0
        if isinstance(d_guess, str):
            if d_guess != "degree":
                raise ValueError(f"unknown d_guess {d_guess!r}")
            guess = np.log2(max(1, deg[i], *(deg[adj[i]] if len(adj[i]) else [0])))
        else:
            guess = float(d_guess)
        return int(np.ceil(10.0 ** (guess / 2.0)))

    def one(i):
        ext = extended_neighborhood(g_star, i, hops, need(i))
        c = recenter(i, g_star, ext, d)
        r = d[c, ext]
        if not np.any(r > 0):
            return c, len(ext), 0.0
        curve = _zprime(r ** 2, sigma_grid(r, n_sigma))
        return c, len(ext), float(curve.max())

    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as ex:
            out = list(ex.map(one, range(n)))
    else:
        out = [one(i) for i in range(n)]
    center = np.array([o[0] for o in out], dtype=np.int64)
    size = np.array([o[1] for o in out], dtype=np.int64)
    d_hat = np.array([o[2] for o in out])

    flog = _floor_log2_degree(deg)
    # closed-neighborhood means
    cnt = deg + 1.0
    e = g_star.edges
    s_hat = d_hat.copy()
    s_deg = flog.copy()
    np.add.at(s_hat, e[:, 0], d_hat[e[:, 1]])
    np.add.at(s_hat, e[:, 1], d_hat[e[:, 0]])
    np.add.at(s_deg, e[:, 0], flog[e[:, 1]])
    np.add.at(s_deg, e[:, 1], flog[e[:, 0]])
    d_hat_prime = s_hat / cnt
    d_tilde_prime = s_deg / cnt
    d_star = np.maximum(d_hat_prime, d_tilde_prime)
    return DimensionEstimate(d_hat, d_hat_prime, d_tilde_prime, d_star, center, size, hops, n_sigma)


def knn_neighborhoods(d, k: int) -> list[np.ndarray]:
    """The ``k`` nearest other points of every node, closest first."""
    d = as_distance_array(d)
    n = len(d)
    if not 1 <= k < n:
        raise ValueError(f"k must lie in [1, {n - 1}]")
    out = []
    for i in range(n):
        row = d[i].copy()
        row[i] = -np.inf
        idx = np.argpartition(row, k)[:k + 1]
        idx = idx[idx != i]
        idx = idx[np.argsort(d[i, idx], kind="stable")][:k]
        out.append(idx)
    return out


def graph_neighborhoods(g: NeighborGraph) -> list[np.ndarray]:
    """Adjacency lists of ``g``, for MLE on the converged graph."""
    return [nb.copy() for nb in g.adjacency]


def mle_dimension(d, neighborhoods, use_inverse_average: bool = False) -> MLEEstimate:
    """Levina-Bickel maximum likelihood dimension.

    For a node with neighbor distances ``T_1 <= ... <= T_k``,

        m = [ (1 / (k - 1)) * sum_{j < k} log(T_k / T_j) ] ** -1

    and the reported value averages ``m`` over the node and its neighbors,
    or averages ``1 / m`` and inverts when ``use_inverse_average`` is set.

    Examples
    --------
    >>> import numpy as np
    >>> d = np.array([[0, .5, 1], [.5, 0, .5], [1, .5, 0]])
    >>> float(mle_dimension(d, [[1, 2], [0, 2], [1, 0]]).m_raw[0])
    1.4426950408889634
    """
    d = as_distance_array(d)
    n = len(d)
    if len(neighborhoods) != n:
        raise ValueError("one neighborhood per node is required")
    m_raw = np.empty(n)
    ks = np.empty(n, dtype=np.int64)
    for i, nb in enumerate(neighborhoods):
        nb = np.asarray(nb, dtype=np.int64)
        nb = nb[nb != i]
        if len(nb) < 2:
            raise ValueError(f"node {i}: neighborhood needs at least 2 other members")
        t = np.sort(d[i, nb])
        if t[0] <= 0:
            raise ValueError(f"node {i}: zero distance to a neighbor (duplicate point)")
        s = np.log(t[-1] / t[:-1]).sum() / (len(t) - 1)
        m_raw[i] = np.inf if s == 0 else 1.0 / s
        ks[i] = len(t)
    m = np.empty(n)
    for i, nb in enumerate(neighborhoods):
        idx = np.unique(np.concatenate([[i], np.asarray(nb, dtype=np.int64)]))
        if use_inverse_average:
            m[i] = 1.0 / np.mean(1.0 / m_raw[idx])
        else:
            m[i] = np.mean(m_raw[idx])
    return MLEEstimate(m_raw, m, ks, bool(use_inverse_average))


def save_dimension(est: DimensionEstimate, path) -> None:
    """CSV with columns ``node,d_hat,d_hat_prime,d_tilde_prime,d_star``."""
    with open(path, "w") as fh:
        fh.write("node,d_hat,d_hat_prime,d_tilde_prime,d_star\n")
        for k in range(est.n_nodes):
            fh.write(f"{k},{float(est.d_hat[k])!r},{float(est.d_hat_prime[k])!r},"
                     f"{float(est.d_tilde_prime[k])!r},{float(est.d_star[k])!r}\n")


def save_mle(est: MLEEstimate, path) -> None:
    """CSV with columns ``node,m_k``."""
    with open(path, "w") as fh:
        fh.write("node,m_k\n")
        for k, v in enumerate(est.m_k):
            fh.write(f"{k},{float(v)!r}\n")
